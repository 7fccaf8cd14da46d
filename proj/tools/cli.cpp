#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <optional>

#include <CLI11.hpp>

#include "skillseq/config.hpp"
#include "skillseq/error.hpp"
#include "skillseq/execution.hpp"
#include "skillseq/learn.hpp"
#include "skillseq/serialization.hpp"

namespace skillseq::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Values shared by every command. Optional overrides are applied on top of the config file.
struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out;
  std::optional<double> control_weight;
  std::optional<double> terminal_weight;
  std::optional<double> dt;
  std::optional<int> passes;
  std::optional<double> em_tolerance;
  std::optional<int> em_max_iterations;
  std::optional<double> success_tolerance;
  std::optional<double> divergence_threshold;
  bool no_duration_cap = false;

  ToolConfig config() const {
    ToolConfig c = load_config(config_path);
    if (control_weight) c.tracking.control_weight = *control_weight;
    if (terminal_weight) c.tracking.terminal_weight = *terminal_weight;
    if (dt) c.tracking.dt = *dt;
    if (passes) c.tracking.passes = *passes;
    if (em_tolerance) c.em_tolerance = *em_tolerance;
    if (em_max_iterations) c.em_max_iterations = *em_max_iterations;
    if (success_tolerance) c.success_tolerance = *success_tolerance;
    if (divergence_threshold) c.divergence_threshold = *divergence_threshold;
    if (no_duration_cap) c.viterbi.cap_durations = false;
    c.validate();
    return c;
  }

  std::string out_or(const std::string& fallback) const { return out.empty() ? fallback : out; }
};

io::Json load_json(const std::string& path) { return io::parse(io::read_file(path), path); }

CascadedModel load_model(const std::string& path) { return io::model_from_json(load_json(path)); }

SystemState load_state(const std::string& path, const StateSpace& space) {
  return io::state_from_json(load_json(path), space);
}

int count_edges(const TPHSMM& h) {
  int edges = 0;
  for (Eigen::Index i = 0; i < h.transitions.rows(); ++i) {
    for (Eigen::Index j = 0; j < h.transitions.cols(); ++j) edges += h.transitions(i, j) > 0.0;
  }
  return edges;
}

// ---- gen ---------------------------------------------------------------------

struct GenArgs {
  std::string scenario = "fig3";
  std::string scenario_config;
  std::optional<int> demos_per_branch;
  std::optional<double> sample_noise;
  std::optional<double> layout_spread;
};

io::Dataset chain_dataset(const ChainDataset& data, const StateSpace& space, std::size_t i) {
  io::Dataset d;
  d.skill = data.skill_names[i];
  d.space = space;
  d.objects = data.skill_objects[i];
  d.frames = condition_frames(d.objects);
  d.demos = data.demos[i];
  return d;
}

int cmd_gen(const Globals& g, const GenArgs& a, std::ostream& out) {
  ScenarioConfig config;
  if (!a.scenario_config.empty()) config = io::scenario_from_json(load_json(a.scenario_config));
  else config.name = a.scenario;
  config.seed = g.seed;
  if (a.demos_per_branch) config.demos_per_branch = *a.demos_per_branch;
  if (a.sample_noise) config.sample_noise = *a.sample_noise;
  if (a.layout_spread) config.layout_spread = *a.layout_spread;
  config.validate();

  const fs::path dir = g.out_or(".");
  fs::create_directories(dir);
  const StateSpace space = scenario_space(config);
  std::vector<io::Dataset> sets;
  if (config.name == "fig3") {
    io::Dataset d;
    d.space = space;
    d.objects = scenario_objects(config);
    d.frames = condition_frames(d.objects);
    d.demos = generate_branching_demos(config);
    d.skill = d.demos.front().skill;
    sets.push_back(std::move(d));
  } else {
    const ChainDataset data = generate_skill_chain(config);
    for (std::size_t i = 0; i < data.skill_names.size(); ++i) {
      sets.push_back(chain_dataset(data, space, i));
    }
  }
  io::write_file((dir / "scenario.json").string(), io::dump(io::to_json(config)));
  for (const auto& d : sets) {
    const fs::path path = dir / (d.skill + ".json");
    io::write_file(path.string(), io::dump(io::to_json(d)));
    out << "wrote " << path.string() << " (" << d.demos.size() << " demos)\n";
  }
  return kExitOk;
}

// ---- learn -------------------------------------------------------------------

struct LearnArgs {
  std::string dataset;
  int K = 0;
  std::string init;
  double perception_noise = 0.0;
  int bic_sweep = 0;
  std::optional<int> restarts;
};

int cmd_learn(const Globals& g, const LearnArgs& a, std::ostream& out) {
  const ToolConfig config = g.config();
  const io::Dataset data = io::dataset_from_json(load_json(a.dataset));
  LearnOptions options;
  options.em.seed = g.seed;
  options.em.tolerance = config.em_tolerance;
  options.em.max_iterations = config.em_max_iterations;
  options.em.init = config.em_init;
  options.em.restarts = a.restarts.value_or(config.em_restarts);
  if (a.init == "kmeans") options.em.init = EmInit::KMeans;
  else if (a.init == "time_binning") options.em.init = EmInit::TimeBinning;
  else if (!a.init.empty()) throw ValidationError("--init must be 'time_binning' or 'kmeans'");
  options.conditions.perception_noise = a.perception_noise;

  for (int k = 1; k <= a.bic_sweep; ++k) {
    const EmResult fit = em_fit(data.space.robot, data.demos, data.frames, k, options.em);
    out << "bic K=" << k << " " << std::setprecision(10) << bic(fit.model, data.demos) << "\n";
  }

  const auto t0 = Clock::now();
  const LearnResult res =
      learn_skill(data.skill, data.space, data.objects, data.frames, data.demos, a.K, options);
  const double elapsed = ms_since(t0);
  const TPHSMM& h = res.model.hsmm;
  const std::string path = g.out_or(data.skill + ".model.json");
  io::write_file(path, io::dump(io::to_json(res.model)));
  out << "skill " << data.skill << ": K=" << h.size()
      << " initial=" << h.initial_states().size() << " final=" << h.final_states().size()
      << " branches=" << h.final_states().size() << std::setprecision(10)
      << " log_likelihood=" << res.model.final_log_likelihood
      << " iterations=" << res.iterations << " reseeds=" << res.reseeds
      << std::setprecision(4) << " time_ms=" << elapsed << "\n";
  for (const auto& w : res.model.conditions.warnings) out << "warning: " << w << "\n";
  out << "wrote " << path << "\n";
  return kExitOk;
}

// ---- compose -----------------------------------------------------------------

int cmd_compose(const Globals& g, const std::vector<std::string>& paths, std::ostream& out) {
  std::vector<SkillModel> skills;
  for (const auto& p : paths) {
    const CascadedModel m = load_model(p);
    skills.insert(skills.end(), m.skills.begin(), m.skills.end());
  }
  const auto t0 = Clock::now();
  const CascadedModel joint = cascade_sequence(skills);
  const double elapsed = ms_since(t0);
  const std::string path = g.out_or("composed.model.json");
  io::write_file(path, io::dump(io::to_json(joint)));
  const TPHSMM& h = joint.joint.hsmm;
  out << "composed " << joint.joint.name << ": K_hat=" << h.size() << " edges=" << count_edges(h)
      << " K_i|K_f=" << h.initial_states().size() << "|" << h.final_states().size()
      << std::setprecision(4) << " compose_ms=" << elapsed << "\n";
  out << "wrote " << path << "\n";
  return kExitOk;
}

// ---- plan --------------------------------------------------------------------

struct PlanArgs {
  std::string model;
  std::string initial;
  std::string goal;
  int horizon = 0;
};

int cmd_plan(const Globals& g, const PlanArgs& a, std::ostream& out) {
  const ToolConfig config = g.config();
  const std::string model_bytes = io::read_file(a.model);
  const CascadedModel model = io::model_from_json(io::parse(model_bytes, a.model));
  const StateSpace& space = model.joint.space;
  io::PlanFile plan;
  plan.initial = load_state(a.initial, space);
  plan.goal = load_state(a.goal, space);
  if (a.horizon < 0) throw ValidationError("horizon must be positive");

  const auto t0 = Clock::now();
  const SequencePlan seq =
      plan_sequence(model, plan.initial, plan.goal, a.horizon, config.viterbi);
  const double elapsed = ms_since(t0);
  plan.model_hash = io::fnv1a_hex(model_bytes);
  plan.horizon = seq.horizon;
  plan.sequence = seq.sequence;
  plan.segments = seq.segments;
  const TPGMM& gmm = model.joint.hsmm.gmm;
  const auto frames = instantiate_frames(gmm.manifold, space, gmm.frames, plan.initial);
  const GlobalGMM global = global_gmm(gmm, frames);
  for (int k : plan.sequence.states) plan.references.push_back(global.components[k]);

  const std::string path = g.out_or("plan.json");
  io::write_file(path, io::dump(io::to_json(plan, space)));
  out << "plan: T=" << plan.horizon << " skills=" << plan.segments.size()
      << std::setprecision(10) << " log_score=" << plan.sequence.log_score
      << std::setprecision(4) << " plan_ms=" << elapsed << "\n";
  for (const auto& s : plan.segments) {
    out << "  skill " << model.skills[s.skill].name << ": start=" << s.start
        << " length=" << s.length << " states=";
    for (std::size_t i = 0; i < s.joint_states.size(); ++i) {
      if (i == 0 || s.joint_states[i] != s.joint_states[i - 1]) out << s.joint_states[i] << " ";
    }
    out << "\n";
  }
  out << "wrote " << path << "\n";
  return kExitOk;
}

// ---- track -------------------------------------------------------------------

struct TrackArgs {
  std::string model;
  std::string plan;
  std::string csv;
};

int cmd_track(const Globals& g, const TrackArgs& a, std::ostream& out) {
  const ToolConfig config = g.config();
  const std::string model_bytes = io::read_file(a.model);
  const CascadedModel model = io::model_from_json(io::parse(model_bytes, a.model));
  const io::PlanFile plan = io::plan_from_json(load_json(a.plan), model.joint.space);
  if (plan.model_hash != io::fnv1a_hex(model_bytes)) {
    throw ValidationError("plan '" + a.plan + "' was not computed from model '" + a.model + "'");
  }
  const Manifold& m = model.joint.space.robot;
  TrackingProblem problem;
  problem.manifold = m;
  problem.references = plan.references;
  problem.R = config.tracking.control_weight * Matrix::Identity(m.tangent_dim(), m.tangent_dim());
  problem.dt = config.tracking.dt;
  problem.terminal_weight = config.tracking.terminal_weight;
  problem.x0 = plan.initial.end_effector;

  const auto t0 = Clock::now();
  const TrackingSolution sol = solve(problem, config.tracking.passes);
  const double elapsed = ms_since(t0);

  io::TrajectoryFile traj;
  traj.manifold = m.name();
  traj.dt = problem.dt;
  traj.states = sol.states;
  traj.velocities = sol.velocities;
  traj.controls = sol.controls;
  traj.cost = sol.cost;
  const std::string path = g.out_or("trajectory.json");
  const std::string csv = a.csv.empty() ? fs::path(path).replace_extension(".csv").string() : a.csv;
  io::write_file(path, io::dump(io::to_json(traj)));
  io::write_file(csv, io::trajectory_csv(traj));

  const RiemannianGaussian& last = plan.references.back();
  const Tangent e = m.log(last.mean, sol.states.back());
  const double mahalanobis = std::sqrt(e.dot(last.covariance.ldlt().solve(e)));
  out << "track: rows=" << sol.states.size() << std::setprecision(6)
      << " cost=" << sol.cost << " terminal_error=" << e.norm()
      << " terminal_mahalanobis=" << mahalanobis
      << " within_3sigma=" << (mahalanobis <= 3.0 ? "yes" : "no") << std::setprecision(4)
      << " track_ms=" << elapsed << "\n";
  out << "wrote " << path << " and " << csv << "\n";
  return kExitOk;
}

// ---- run ---------------------------------------------------------------------

struct RunArgs {
  std::string model;
  std::string scenario = "chain";
  int trials = 20;
  double noise = 0.0;
  bool open_loop = false;
  int horizon = 0;
};

int cmd_run(const Globals& g, const RunArgs& a, std::ostream& out) {
  const ToolConfig config = g.config();
  if (a.scenario != "chain") {
    throw ValidationError("run supports the 'chain' scenario only, got '" + a.scenario + "'");
  }
  if (a.trials < 1) throw ValidationError("--trials must be at least 1");
  if (a.noise < 0.0) throw ValidationError("--noise must be nonnegative");
  const auto t0 = Clock::now();
  const CascadedModel model = load_model(a.model);
  const double load_ms = ms_since(t0);

  TrialSettings settings;
  settings.scenario.name = a.scenario;
  settings.execution.closed_loop = !a.open_loop;
  settings.execution.perception_noise = a.noise;
  settings.execution.tracking = config.tracking;
  settings.execution.divergence_threshold = config.divergence_threshold;
  settings.attachment = config.attachment;
  settings.grasp_noise = a.noise;
  settings.success_tolerance = config.success_tolerance;
  settings.horizon = a.horizon;
  settings.viterbi = config.viterbi;

  const std::vector<std::string> branches = {"left", "right"};
  int successes = 0;
  double object_sum = 0.0, terminal_sum = 0.0, plan_ms = 0.0;
  std::vector<double> track_ms(model.skills.size(), 0.0);
  std::vector<int> track_n(model.skills.size(), 0);
  int horizon = 0;
  for (int i = 0; i < a.trials; ++i) {
    const TrialOutcome r =
        run_chain_trial(model, settings, g.seed + static_cast<std::uint64_t>(i), branches[i % 2]);
    successes += r.success;
    object_sum += r.object_error;
    terminal_sum += r.terminal_error;
    plan_ms += 1e3 * r.plan_seconds;
    horizon = r.plan.horizon;
    for (const auto& s : r.log.skills) {
      track_ms[s.skill] += 1e3 * s.track_seconds;
      ++track_n[s.skill];
    }
    out << "trial " << i << " branch=" << r.branch << std::setprecision(6)
        << " object_error=" << r.object_error << " terminal_error=" << r.terminal_error
        << " success=" << (r.success ? "yes" : "no") << "\n";
  }
  const double n = a.trials;
  out << "summary: mode=" << (a.open_loop ? "open-loop" : "closed-loop") << " noise=" << a.noise
      << " trials=" << a.trials << " success_rate=" << successes / n << std::setprecision(6)
      << " mean_object_error=" << object_sum / n << " mean_terminal_error=" << terminal_sum / n
      << "\n";
  out << std::setprecision(4) << "timing: T=" << horizon << " K_hat=" << model.size()
      << " load_ms=" << load_ms << " plan_ms=" << plan_ms / n << "\n";
  for (std::size_t s = 0; s < model.skills.size(); ++s) {
    out << "  skill " << model.skills[s].name << ": K=" << model.skills[s].hsmm.size()
        << " track_ms=" << (track_n[s] ? track_ms[s] / track_n[s] : 0.0) << "\n";
  }
  return kExitOk;
}

// ---- inspect -----------------------------------------------------------------

void inspect_model(const CascadedModel& m, std::ostream& out) {
  const TPHSMM& h = m.joint.hsmm;
  out << "model " << m.joint.name << ": K=" << h.size() << " edges=" << count_edges(h)
      << " K_i|K_f=" << h.initial_states().size() << "|" << h.final_states().size()
      << " manifold=" << h.gmm.manifold.name() << "\n  frames:";
  for (const auto& f : h.gmm.frames) out << " " << f.id << "(" << f.base << ")";
  out << "\n  durations:";
  for (const auto& d : h.durations) out << " " << std::setprecision(3) << d.mean;
  out << "\n  manipulated:";
  for (const auto& [name, flag] : m.joint.conditions.manipulated) {
    out << " " << name << "=" << (flag ? "yes" : "no");
  }
  out << "\n";
  if (m.skills.size() > 1) {
    out << "  skills:";
    for (const auto& s : m.skills) out << " " << s.name << "(K=" << s.hsmm.size() << ")";
    out << "\n";
  }
  for (const auto& w : m.joint.conditions.warnings) out << "  warning: " << w << "\n";
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const io::Json j = load_json(path);
  const std::string schema = j.is_object() && j.contains("schema") && j["schema"].is_string()
                                 ? j["schema"].get<std::string>()
                                 : "";
  if (schema == "skillseq/model") {
    inspect_model(io::model_from_json(j), out);
  } else if (schema == "skillseq/dataset") {
    const io::Dataset d = io::dataset_from_json(j);
    std::map<std::string, int> branches;
    double len = 0.0;
    for (const auto& demo : d.demos) {
      ++branches[demo.branch];
      len += static_cast<double>(demo.trajectory.size());
    }
    out << "dataset " << d.skill << ": demos=" << d.demos.size()
        << " manifold=" << d.space.robot.name() << " mean_length=" << len / d.demos.size()
        << " branches:";
    for (const auto& [b, c] : branches) out << " " << (b.empty() ? "?" : b) << "=" << c;
    out << "\n";
  } else if (schema == "skillseq/plan") {
    out << "plan: T=" << j.value("horizon", 0) << " model_hash=" << j.value("model_hash", "")
        << " segments=" << j.value("segments", io::Json::array()).size() << "\n";
  } else if (schema == "skillseq/trajectory") {
    const io::TrajectoryFile t = io::trajectory_from_json(j);
    out << "trajectory: rows=" << t.states.size() << " manifold=" << t.manifold
        << " cost=" << t.cost << "\n";
  } else if (schema == "skillseq/scenario") {
    const ScenarioConfig c = io::scenario_from_json(j);
    out << "scenario " << c.name << ": seed=" << c.seed << " demos_per_branch="
        << c.demos_per_branch << " branches=" << c.branches << "\n";
  } else if (schema == "skillseq/state") {
    out << "state: objects=" << j.value("objects", io::Json::object()).size() << "\n";
  } else {
    throw ValidationError("'" + path + "' has no known schema");
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn, compose, plan and execute task-parameterized skill models", "skillseq"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SKILLSEQ_VERSION_STRING);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config_path, "JSON config with tolerances and weights")
      ->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--control-weight", g.control_weight, "Control weight r of R = r I");
  app.add_option("--terminal-weight", g.terminal_weight, "Terminal cost multiplier");
  app.add_option("--dt", g.dt, "Control time step");
  app.add_option("--passes", g.passes, "LQT linearization passes");
  app.add_option("--em-tolerance", g.em_tolerance, "EM log-likelihood tolerance");
  app.add_option("--em-max-iterations", g.em_max_iterations, "EM iteration limit");
  app.add_option("--success-tolerance", g.success_tolerance, "Goal distance counted as success");
  app.add_option("--divergence-threshold", g.divergence_threshold,
                 "Largest accepted tracking terminal error");
  app.add_flag("--no-duration-cap", g.no_duration_cap, "Allow segment durations up to t - 1");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic demonstration dataset");
  gen_cmd->add_option("--scenario", gen.scenario, "Scenario name (fig3 or chain)");
  gen_cmd->add_option("--scenario-config", gen.scenario_config, "Scenario config JSON");
  gen_cmd->add_option("--demos-per-branch", gen.demos_per_branch, "Demonstrations per branch");
  gen_cmd->add_option("--sample-noise", gen.sample_noise, "Per-sample noise");
  gen_cmd->add_option("--layout-spread", gen.layout_spread, "Scale of random object placement");

  LearnArgs learn;
  auto* learn_cmd = app.add_subcommand("learn", "Fit a skill model to a dataset");
  learn_cmd->add_option("dataset", learn.dataset, "Dataset file")->required();
  learn_cmd->add_option("-K,--components", learn.K, "Number of components")->required();
  learn_cmd->add_option("--init", learn.init, "EM initialization: time_binning or kmeans");
  learn_cmd->add_option("--perception-noise", learn.perception_noise,
                        "Noise scale used to flag manipulated objects");
  learn_cmd->add_option("--restarts", learn.restarts,
                        "Independent k-means seeded fits; the best likelihood is kept");
  learn_cmd->add_option("--bic-sweep", learn.bic_sweep, "Print BIC for K = 1..N first");

  std::vector<std::string> compose_paths;
  auto* compose_cmd = app.add_subcommand("compose", "Cascade skill models in the given order");
  compose_cmd->add_option("models", compose_paths, "Model files")->required();

  PlanArgs plan;
  auto* plan_cmd = app.add_subcommand("plan", "Decode the most likely state sequence");
  plan_cmd->add_option("model", plan.model, "Model file")->required();
  plan_cmd->add_option("--initial", plan.initial, "Initial system state file")->required();
  plan_cmd->add_option("--goal", plan.goal, "Goal system state file")->required();
  plan_cmd->add_option("-T,--horizon", plan.horizon, "Horizon; default is the accumulated mean length");

  TrackArgs track;
  auto* track_cmd = app.add_subcommand("track", "Track a plan with Riemannian LQT");
  track_cmd->add_option("model", track.model, "Model file")->required();
  track_cmd->add_option("plan", track.plan, "Plan file")->required();
  track_cmd->add_option("--csv", track.csv, "CSV output; default next to --out");

  RunArgs runa;
  auto* run_cmd = app.add_subcommand("run", "Execute a composed model on simulated trials");
  run_cmd->add_option("model", runa.model, "Composed model file")->required();
  run_cmd->add_option("--scenario", runa.scenario, "Scenario of the trials");
  run_cmd->add_option("--trials", runa.trials, "Number of trials");
  run_cmd->add_option("--noise", runa.noise, "Perception and in-hand noise scale");
  run_cmd->add_flag("--open-loop", runa.open_loop, "Observe once and track the whole plan");
  run_cmd->add_option("-T,--horizon", runa.horizon, "Plan horizon");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize any skillseq file");
  inspect_cmd->add_option("file", inspect_path, "File")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen_cmd) return cmd_gen(g, gen, out);
    if (*learn_cmd) return cmd_learn(g, learn, out);
    if (*compose_cmd) return cmd_compose(g, compose_paths, out);
    if (*plan_cmd) return cmd_plan(g, plan, out);
    if (*track_cmd) return cmd_track(g, track, out);
    if (*run_cmd) return cmd_run(g, runa, out);
    if (*inspect_cmd) return cmd_inspect(inspect_path, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace skillseq::cli
