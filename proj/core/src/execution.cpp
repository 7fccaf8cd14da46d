#include "skillseq/execution.hpp"

#include <chrono>
#include <map>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

// Global Gaussian of every state in `states`, computed once per distinct state.
std::vector<RiemannianGaussian> references_for(const TPGMM& gmm, std::span<const Frame> frames,
                                               const std::vector<int>& states) {
  std::map<int, RiemannianGaussian> cache;
  std::vector<RiemannianGaussian> out;
  out.reserve(states.size());
  for (int k : states) {
    auto it = cache.find(k);
    if (it == cache.end()) it = cache.emplace(k, global_component(gmm, frames, k)).first;
    out.push_back(it->second);
  }
  return out;
}

TrackingProblem make_problem(const Manifold& m, std::vector<RiemannianGaussian> refs,
                             const Point& x0, const TrackingSettings& s) {
  TrackingProblem p;
  p.manifold = m;
  p.references = std::move(refs);
  p.R = s.control_weight * Matrix::Identity(m.tangent_dim(), m.tangent_dim());
  p.dt = s.dt;
  p.terminal_weight = s.terminal_weight;
  p.x0 = x0;
  return p;
}

// Tracks the references from the simulator's current state and applies the result.
ExecutedSkill track(const Manifold& m, std::vector<RiemannianGaussian> refs, Simulator& sim,
                    const ExecutionOptions& options, int skill, int start, ExecutionLog& log) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrackingProblem problem =
      make_problem(m, std::move(refs), sim.state().end_effector, options.tracking);
  const TrackingSolution sol = solve(problem, options.tracking.passes);
  ExecutedSkill out;
  out.skill = skill;
  out.start = start;
  out.length = problem.horizon();
  out.terminal_error = m.distance(sol.states.back(), problem.references.back().mean);
  if (!(out.terminal_error <= options.divergence_threshold)) {
    throw NumericalError("tracking of skill " + std::to_string(skill) + " diverged: terminal error " +
                         std::to_string(out.terminal_error));
  }
  for (std::size_t t = 1; t < sol.states.size(); ++t) {
    sim.step(sol.states[t]);
    log.commands.push_back(sol.states[t]);
  }
  out.track_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

ExecutionLog execute_sequence(const CascadedModel& model, const SequencePlan& plan,
                              Simulator& simulator, const ExecutionOptions& options) {
  const Manifold& m = model.joint.hsmm.gmm.manifold;
  const StateSpace& space = model.joint.space;
  ExecutionLog log;
  log.commands.push_back(simulator.state().end_effector);

  if (!options.closed_loop) {
    const SystemState seen = simulator.observe(options.perception_noise, options.seed);
    const auto frames = instantiate_frames(m, space, model.joint.hsmm.gmm.frames, seen);
    auto refs = references_for(model.joint.hsmm.gmm, frames, plan.sequence.states);
    log.skills.push_back(track(m, std::move(refs), simulator, options, 0, 0, log));
    log.final_state = simulator.state();
    return log;
  }

  for (std::size_t h = 0; h < plan.segments.size(); ++h) {
    const SkillSegment& seg = plan.segments[h];
    const SkillModel& skill = model.skills.at(seg.skill);
    // Observe, then re-instantiate this skill's frames on what was seen.
    const SystemState seen = simulator.observe(options.perception_noise, options.seed + h);
    const auto frames = instantiate_frames(m, space, skill.hsmm.gmm.frames, seen);
    auto refs = references_for(skill.hsmm.gmm, frames, seg.source_states);
    // Consecutive segments share their boundary state, so a segment spans length + 1 points.
    if (h + 1 < plan.segments.size()) refs.push_back(refs.back());
    log.skills.push_back(track(m, std::move(refs), simulator, options, seg.skill, seg.start, log));
  }
  log.final_state = simulator.state();
  return log;
}

TrialOutcome run_chain_trial(const CascadedModel& model, const TrialSettings& settings,
                             std::uint64_t seed, const std::string& branch) {
  const StateSpace& space = model.joint.space;
  const ChainEpisode episode = sample_chain_episode(settings.scenario, seed, branch);
  const SystemState& goal = episode.skill_finals.back();

  TrialOutcome out;
  out.branch = branch;
  ExecutionOptions exec = settings.execution;
  exec.seed = seed * 1000;
  const auto t0 = std::chrono::steady_clock::now();
  const SystemState seen = observe(space, episode.initial, exec.perception_noise, exec.seed);
  out.plan = plan_sequence(model, seen, goal, settings.horizon, settings.viterbi);
  out.plan_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  Simulator sim(space, episode.initial, settings.attachment, settings.grasp_noise, seed);
  out.log = execute_sequence(model, out.plan, sim, exec);

  const SystemState& fin = out.log.final_state;
  for (const auto& [name, x] : goal.objects) {
    const Pose want = pose_of(space.object, x);
    const Pose got = pose_of(space.object, fin.entity(name));
    out.object_error = std::max(out.object_error, (want.position - got.position).norm());
  }
  const std::string& anchor = goal.objects.begin()->first;
  const Eigen::Vector3d want_rel = pose_of(space.robot, goal.end_effector).position -
                                   pose_of(space.object, goal.entity(anchor)).position;
  const Eigen::Vector3d got_rel = pose_of(space.robot, fin.end_effector).position -
                                  pose_of(space.object, fin.entity(anchor)).position;
  out.terminal_error = out.object_error + (want_rel - got_rel).norm();
  out.success = out.object_error <= settings.success_tolerance;
  return out;
}

}  // namespace skillseq
