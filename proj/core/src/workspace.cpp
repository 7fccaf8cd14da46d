#include "skillseq/workspace.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gauss(Rng& rng, double sigma) {
  return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
}

Pose make_pose(double x, double y, double z, double yaw = 0.0) {
  Pose p;
  p.position = {x, y, z};
  p.orientation = Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()));
  p.orientation = quat::canonical(p.orientation);
  return p;
}

Point object_point(const Manifold& m, const Pose& pose) {
  return with_pose(m, m.identity(), pose);
}

Point robot_point(const Manifold& m, const Pose& pose, double gripper) {
  Point x = with_pose(m, m.identity(), pose);
  if (m.blocks().size() == 3) x[x.size() - 1] = gripper;
  return x;
}

double gripper_of(const Manifold& m, const Point& x) {
  return m.blocks().size() == 3 ? x[x.size() - 1] : 0.0;
}

// Perturbs every tangent coordinate by N(0, sigma^2).
Point jitter(const Manifold& m, const Point& x, double sigma, Rng& rng) {
  if (sigma <= 0.0) return x;
  Tangent v(m.tangent_dim());
  for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng, sigma);
  return m.exp(x, v);
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

// Piecewise motion script: move to a pose, then dwell while the gripper ramps.
struct Segment {
  Pose target;
  double gripper;
  int move;
  int dwell;
  int ramp;
};

struct Script {
  std::vector<Pose> poses;
  std::vector<double> gripper;
};

Script run_script(const Pose& start, double gripper, const std::vector<Segment>& segments) {
  Script out;
  Pose cur = start;
  double g = gripper;
  for (const auto& seg : segments) {
    for (int i = 1; i <= seg.move; ++i) {
      const double s = smoothstep(static_cast<double>(i) / seg.move);
      Pose p;
      p.position = (1.0 - s) * cur.position + s * seg.target.position;
      p.orientation = quat::canonical(cur.orientation.slerp(s, seg.target.orientation));
      out.poses.push_back(p);
      out.gripper.push_back(g);
    }
    cur = seg.target;
    for (int i = 1; i <= seg.dwell; ++i) {
      const double s = seg.ramp > 0 ? std::min(1.0, static_cast<double>(i) / seg.ramp) : 1.0;
      out.poses.push_back(cur);
      out.gripper.push_back((1.0 - s) * g + s * seg.gripper);
    }
    g = seg.gripper;
  }
  return out;
}

int jitter_steps(Rng& rng, int n, bool enabled) {
  if (!enabled) return n;
  return n + std::uniform_int_distribution<int>(-2, 2)(rng);
}

// ---- planar branching scenario --------------------------------------------

constexpr double kHomeX = 0.1;
constexpr double kHomeY = 0.5;

// ---- chain scenario --------------------------------------------------------

const Pose kChainHome = make_pose(0.5, 0.15, 0.35);
constexpr double kPlaceOffset = 0.12;

constexpr double kPlaceYaw = 1.0;

// The part is set down beside the fixture, turned towards the side it is placed on.
Pose place_pose(const Pose& fixture, const std::string& branch) {
  const double side = branch == "left" ? 1.0 : -1.0;
  return fixture * make_pose(0.0, side * kPlaceOffset, 0.0, side * kPlaceYaw);
}

std::vector<Segment> pick_place_segments(const Pose& part, const Pose& target, Rng& rng,
                                         bool jitter_time) {
  return {
      {kChainHome, 0.0, 0, jitter_steps(rng, 12, jitter_time), 0},
      {part, 1.0, 8, jitter_steps(rng, 14, jitter_time), 1},
      {target, 1.0, 6, jitter_steps(rng, 16, jitter_time), 0},
  };
}

std::vector<Segment> release_segments(const Pose& part, Rng& rng, bool jitter_time) {
  return {
      {part, 0.0, 0, jitter_steps(rng, 10, jitter_time), 1},
      {part * make_pose(-0.1, 0, 0.22), 0.0, 12, jitter_steps(rng, 12, jitter_time), 0},
  };
}

// Uniform draw from center +- half_width * spread.
double spread_draw(Rng& rng, double center, double half_width, double spread) {
  return center + spread * uniform(rng, -half_width, half_width);
}

SystemState sample_chain_scene(const StateSpace& space, double spread, Rng& rng) {
  SystemState s;
  s.end_effector = robot_point(space.robot, kChainHome, 0.0);
  const double ax = spread_draw(rng, 0.3, 0.15, spread);
  const double ay = spread_draw(rng, 0.4, 0.15, spread);
  const double ayaw = spread_draw(rng, 0.0, 0.8, spread);
  const double bx = spread_draw(rng, 0.75, 0.15, spread);
  const double by = spread_draw(rng, 0.5, 0.15, spread);
  const double byaw = spread_draw(rng, 0.0, 0.8, spread);
  s.objects["A"] = object_point(space.object, make_pose(ax, ay, 0.02, ayaw));
  s.objects["B"] = object_point(space.object, make_pose(bx, by, 0.02, byaw));
  return s;
}

struct ChainRun {
  SystemState initial;
  std::vector<Script> scripts;
  std::vector<SystemState> finals;
};

// Scripted noise-free execution of both skills from a scene.
ChainRun script_chain(const StateSpace& space, const SystemState& scene,
                      const std::string& branch, Rng& rng, bool jitter_time) {
  ChainRun run;
  run.initial = scene;
  const Pose part = pose_of(space.object, scene.objects.at("A"));
  const Pose fixture = pose_of(space.object, scene.objects.at("B"));
  const Pose placed = place_pose(fixture, branch);

  run.scripts.push_back(run_script(kChainHome, 0.0, pick_place_segments(part, placed, rng,
                                                                        jitter_time)));
  SystemState mid = scene;
  mid.end_effector = robot_point(space.robot, placed, 1.0);
  mid.objects["A"] = object_point(space.object, placed);
  run.finals.push_back(mid);

  run.scripts.push_back(run_script(placed, 1.0, release_segments(placed, rng, jitter_time)));
  SystemState end = mid;
  end.end_effector = robot_point(space.robot, run.scripts.back().poses.back(), 0.0);
  run.finals.push_back(end);
  return run;
}

Demonstration make_demo(const Manifold& robot, const StateSpace& space, const Script& script,
                        const std::vector<FrameSlot>& slots, const SystemState& initial,
                        const SystemState& final_state, double noise, Rng& rng) {
  Demonstration d;
  for (std::size_t t = 0; t < script.poses.size(); ++t) {
    d.trajectory.push_back(jitter(robot, robot_point(robot, script.poses[t], script.gripper[t]),
                                  noise, rng));
  }
  d.frames = instantiate_frames(robot, space, slots, initial);
  d.initial_state = initial;
  d.initial_state->end_effector = d.trajectory.front();
  d.final_state = final_state;
  d.final_state->end_effector = d.trajectory.back();
  return d;
}

std::vector<FrameSlot> frames_for(const std::vector<std::string>& objects) {
  std::vector<FrameSlot> slots{FrameSlot{kGlobalFrame, kGlobalFrame, Pose{}}};
  for (const auto& o : objects) slots.push_back(FrameSlot::attached(o));
  return slots;
}

std::vector<std::string> chain_branches(int branches) {
  return branches == 1 ? std::vector<std::string>{"left"}
                       : std::vector<std::string>{"left", "right"};
}

}  // namespace

void ScenarioConfig::validate() const {
  const auto& names = scenario_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw ValidationError("unknown scenario '" + name + "' (valid: " + list + ")");
  }
  if (demos_per_branch < 1) throw ValidationError("demos_per_branch must be at least 1");
  if (branches < 1 || branches > 2) throw ValidationError("branches must be 1 or 2");
  if (sample_noise < 0.0 || perception_noise < 0.0 || grasp_noise < 0.0) {
    throw ValidationError("noise scales must be nonnegative");
  }
  if (!(sample_rate > 0.0)) throw ValidationError("sample_rate must be positive");
}

const std::vector<std::string>& ScenarioConfig::scenario_names() {
  static const std::vector<std::string> names{"fig3", "chain"};
  return names;
}

StateSpace scenario_space(const ScenarioConfig& config) {
  if (config.name == "fig3") return {Manifold::euclidean(2), Manifold::euclidean(2)};
  return {};
}

std::vector<std::string> scenario_objects(const ScenarioConfig& config) {
  if (config.name == "fig3") return {"peg"};
  return {"A", "B"};
}

std::vector<Demonstration> generate_branching_demos(const ScenarioConfig& config) {
  config.validate();
  const StateSpace space = scenario_space({.name = "fig3"});
  const Manifold& m = space.robot;
  const std::vector<FrameSlot> slots{FrameSlot{kGlobalFrame, kGlobalFrame, Pose{}},
                                     FrameSlot::attached("peg")};
  const std::vector<std::string> names{"top", "side"};
  const bool jitter_time = config.sample_noise > 0.0;
  Rng rng(config.seed);

  std::vector<Demonstration> demos;
  for (int i = 0; i < config.demos_per_branch; ++i) {
    for (int b = 0; b < config.branches; ++b) {
      const double spread = config.layout_spread;
      const double px = spread_draw(rng, 0.65, 0.1, spread);
      const double py = spread_draw(rng, 0.45, 0.1, spread);
      const Eigen::Vector2d peg(px, py);
      const double hx = kHomeX + gauss(rng, 0.01 * spread);
      const double hy = kHomeY + gauss(rng, 0.01 * spread);
      const Eigen::Vector2d home(hx, hy);
      // Both branches pass a shared waypoint above-left of the peg, then split.
      const Eigen::Vector2d dir = b == 0 ? Eigen::Vector2d(0.0, 1.0) : Eigen::Vector2d(-1.0, 0.0);
      const Eigen::Vector2d pre = peg + Eigen::Vector2d(-0.2, 0.2);
      const Eigen::Vector2d fin = peg + 0.1 * dir;

      std::vector<Eigen::Vector2d> path;
      auto dwell = [&](const Eigen::Vector2d& p, int n) {
        for (int k = 0; k < n; ++k) path.push_back(p);
      };
      auto move = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& c, int n) {
        for (int k = 1; k <= n; ++k) {
          const double s = smoothstep(static_cast<double>(k) / n);
          path.push_back((1.0 - s) * a + s * c);
        }
      };
      dwell(home, jitter_steps(rng, 10, jitter_time));
      move(home, pre, 15);
      dwell(pre, jitter_steps(rng, 8, jitter_time));
      move(pre, fin, 10);
      dwell(fin, jitter_steps(rng, 12, jitter_time));

      Demonstration d;
      d.skill = "pick";
      d.id = names[b] + "_" + std::to_string(i);
      d.sample_rate = config.sample_rate;
      d.branch = names[b];
      for (const auto& p : path) {
        Point x(2);
        x << p.x() + gauss(rng, config.sample_noise), p.y() + gauss(rng, config.sample_noise);
        d.trajectory.push_back(x);
      }
      SystemState s0;
      s0.objects["peg"] = Point(peg);
      s0.end_effector = d.trajectory.front();
      SystemState s1 = s0;
      s1.end_effector = d.trajectory.back();
      s1.timestamp = (d.trajectory.size() - 1) / config.sample_rate;
      d.frames = instantiate_frames(m, space, slots, s0);
      d.initial_state = s0;
      d.final_state = s1;
      demos.push_back(std::move(d));
    }
  }
  return demos;
}

ChainEpisode sample_chain_episode(const ScenarioConfig& config, std::uint64_t seed,
                                  const std::string& branch) {
  const StateSpace space = scenario_space(config);
  Rng rng(seed);
  const SystemState scene = sample_chain_scene(space, config.layout_spread, rng);
  const ChainRun run = script_chain(space, scene, branch, rng, false);
  ChainEpisode ep;
  ep.initial = scene;
  ep.branch = branch;
  ep.skill_finals = run.finals;
  return ep;
}

ChainDataset generate_skill_chain(const ScenarioConfig& config) {
  config.validate();
  const StateSpace space = scenario_space(config);
  ChainDataset data;
  data.skill_names = {"pick_place", "release"};
  data.skill_objects = {{"A", "B"}, {"A"}};
  data.demos.resize(2);
  const std::vector<FrameSlot> slots1 = frames_for({"A", "B"});
  const std::vector<FrameSlot> slots2 = frames_for({"A"});
  const bool jitter_time = config.sample_noise > 0.0;
  Rng rng(config.seed);

  const auto branches = chain_branches(config.branches);
  for (int i = 0; i < config.demos_per_branch; ++i) {
    for (const auto& branch : branches) {
      const SystemState scene = sample_chain_scene(space, config.layout_spread, rng);
      const ChainRun run = script_chain(space, scene, branch, rng, jitter_time);

      Demonstration d1 = make_demo(space.robot, space, run.scripts[0], slots1, scene,
                                   run.finals[0], config.sample_noise, rng);
      d1.skill = data.skill_names[0];
      d1.id = branch + "_" + std::to_string(i);
      d1.branch = branch;
      d1.sample_rate = config.sample_rate;
      d1.final_state->timestamp = (d1.trajectory.size() - 1) / config.sample_rate;

      // The release demo starts exactly where the pick-and-place demo ended.
      SystemState start2 = *d1.final_state;
      start2.timestamp = 0.0;
      Demonstration d2 = make_demo(space.robot, space, run.scripts[1], slots2, start2,
                                   run.finals[1], config.sample_noise, rng);
      d2.trajectory.front() = start2.end_effector;
      d2.initial_state->end_effector = start2.end_effector;
      d2.skill = data.skill_names[1];
      d2.id = branch + "_" + std::to_string(i);
      d2.branch = branch;
      d2.sample_rate = config.sample_rate;
      d2.final_state->timestamp = (d2.trajectory.size() - 1) / config.sample_rate;

      data.demos[0].push_back(std::move(d1));
      data.demos[1].push_back(std::move(d2));
    }
  }
  return data;
}

// ---- simulator ---------------------------------------------------------------

namespace {

std::vector<std::string> attached_objects(const StateSpace& space, const SystemState& state,
                                          const Point& x_next, const AttachmentRules& rules) {
  std::vector<std::string> out;
  if (gripper_of(space.robot, state.end_effector) <= rules.gripper_threshold ||
      gripper_of(space.robot, x_next) <= rules.gripper_threshold) {
    return out;
  }
  const Pose ee = pose_of(space.robot, state.end_effector);
  for (const auto& [name, x] : state.objects) {
    const Pose obj = pose_of(space.object, x);
    if ((obj.position - ee.position).norm() <= rules.grasp_radius) out.push_back(name);
  }
  return out;
}

SystemState move_attached(const StateSpace& space, const SystemState& state, const Point& x_next,
                          const std::vector<std::string>& attached) {
  SystemState out = state;
  out.end_effector = x_next;
  if (attached.empty()) return out;
  const Pose delta = pose_of(space.robot, x_next) * pose_of(space.robot, state.end_effector).inverse();
  for (const auto& name : attached) {
    const Point& x = state.objects.at(name);
    out.objects[name] = with_pose(space.object, x, delta * pose_of(space.object, x));
  }
  return out;
}

}  // namespace

SystemState simulate_step(const StateSpace& space, const SystemState& state, const Point& x_next,
                          const AttachmentRules& rules) {
  space.robot.check_point(x_next, "end-effector command");
  return move_attached(space, state, x_next, attached_objects(space, state, x_next, rules));
}

SystemState observe(const StateSpace& space, const SystemState& state, double noise,
                    std::uint64_t seed, bool include_end_effector) {
  if (noise < 0.0) throw ValidationError("observation noise must be nonnegative");
  SystemState out = state;
  if (noise == 0.0) return out;
  Rng rng(seed);
  for (auto& [name, x] : out.objects) x = jitter(space.object, x, noise, rng);
  if (include_end_effector) out.end_effector = jitter(space.robot, out.end_effector, noise, rng);
  return out;
}

Simulator::Simulator(StateSpace space, SystemState initial, AttachmentRules rules,
                     double grasp_noise, std::uint64_t seed, double dt)
    : space_(std::move(space)),
      state_(std::move(initial)),
      rules_(rules),
      grasp_noise_(grasp_noise),
      seed_(seed),
      dt_(dt) {}

void Simulator::step(const Point& x_next) {
  space_.robot.check_point(x_next, "end-effector command");
  const bool closed = gripper_of(space_.robot, state_.end_effector) > rules_.gripper_threshold &&
                      gripper_of(space_.robot, x_next) > rules_.gripper_threshold;
  // A closed gripper sweeping past another object does not pick it up.
  std::vector<std::string> attached;
  if (closed && !was_closed_) attached = attached_objects(space_, state_, x_next, rules_);
  if (closed) {
    for (const auto& name : held_) {
      if (std::find(attached.begin(), attached.end(), name) == attached.end()) {
        attached.push_back(name);
      }
    }
  }
  if (grasp_noise_ > 0.0) {
    for (const auto& name : attached) {
      if (held_.contains(name)) continue;
      // The part settles in the hand with a random offset.
      Rng rng(seed_ + 7919 * (++grasps_));
      Point& x = state_.objects[name];
      const Pose p = pose_of(space_.object, x);
      Pose shifted = p;
      shifted.position += Eigen::Vector3d(gauss(rng, grasp_noise_), gauss(rng, grasp_noise_), 0.0);
      x = with_pose(space_.object, x, shifted);
    }
  }
  state_ = move_attached(space_, state_, x_next, attached);
  state_.timestamp += dt_;
  held_ = std::set<std::string>(attached.begin(), attached.end());
  was_closed_ = closed;
}

SystemState Simulator::observe(double noise, std::uint64_t seed) const {
  return skillseq::observe(space_, state_, noise, seed);
}

}  // namespace skillseq
