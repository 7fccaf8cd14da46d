#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "skillseq/frame.hpp"
#include "skillseq/tpgmm.hpp"

namespace skillseq {

/// Parameters of the synthetic scenarios.
struct ScenarioConfig {
  /// "fig3" (planar branching pick) or "chain" (pick-and-place then release).
  std::string name = "fig3";
  std::uint64_t seed = 0;
  int demos_per_branch = 10;
  int branches = 2;
  /// Per-sample Gaussian noise added to demonstrations.
  double sample_noise = 0.003;
  /// Noise of observe(); also used to flag manipulated objects.
  double perception_noise = 0.0;
  /// In-hand offset noise applied by the simulator when an object is grasped.
  double grasp_noise = 0.0;
  /// Scales the random placement of objects and of the start pose; 0 fixes the layout.
  double layout_spread = 1.0;
  double sample_rate = 50.0;

  void validate() const;
  static const std::vector<std::string>& scenario_names();
};

/// Workspace manifolds of a scenario: planar for "fig3", 3-D poses otherwise.
StateSpace scenario_space(const ScenarioConfig& config);
/// Objects present in a scenario.
std::vector<std::string> scenario_objects(const ScenarioConfig& config);

/// Planar demonstrations approaching a peg either from the top or from the side.
/// Frames: global and the peg. Branch labels are "top" and "side".
std::vector<Demonstration> generate_branching_demos(const ScenarioConfig& config);

/// Demonstrations of a two-skill chain with objects "A" (the part) and "B" (the fixture).
///
/// Skill "pick_place" grasps A and sets it beside B on one of two sides
/// (branches "left" and "right"); skill "release" opens the gripper and
/// retreats relative to A. Release demos start from the final states of the
/// pick-and-place demos.
struct ChainDataset {
  std::vector<std::string> skill_names;
  std::vector<std::vector<std::string>> skill_objects;
  std::vector<std::vector<Demonstration>> demos;
};

ChainDataset generate_skill_chain(const ScenarioConfig& config);

/// A random chain scene: initial state plus the scripted ground-truth final
/// state of each skill for the given branch.
struct ChainEpisode {
  SystemState initial;
  std::string branch;
  std::vector<SystemState> skill_finals;
};

ChainEpisode sample_chain_episode(const ScenarioConfig& config, std::uint64_t seed,
                                  const std::string& branch);

/// Attachment rules of the kinematic simulator.
struct AttachmentRules {
  double grasp_radius = 0.05;
  double gripper_threshold = 0.5;
};

/// Moves the end-effector to x_next. An object moves rigidly with it when the
/// gripper channel exceeds the threshold before and after the step and the
/// object lies within the grasp radius of the current end-effector position.
SystemState simulate_step(const StateSpace& space, const SystemState& state, const Point& x_next,
                          const AttachmentRules& rules = {});

/// Perturbs object positions with Gaussian noise and orientations with random
/// rotation vectors of the same scale. The end-effector is left untouched
/// unless include_end_effector is set.
SystemState observe(const StateSpace& space, const SystemState& state, double noise,
                    std::uint64_t seed, bool include_end_effector = false);

/// Stateful wrapper around simulate_step with optional in-hand offset noise on grasp.
class Simulator {
 public:
  Simulator(StateSpace space, SystemState initial, AttachmentRules rules = {},
            double grasp_noise = 0.0, std::uint64_t seed = 0, double dt = 0.02);

  const SystemState& state() const { return state_; }
  const StateSpace& space() const { return space_; }
  /// Advances one time step. Objects are picked up only on the step the gripper
  /// closes; a held object stays attached until the gripper opens.
  void step(const Point& x_next);
  const std::set<std::string>& held() const { return held_; }
  SystemState observe(double noise, std::uint64_t seed) const;

 private:
  StateSpace space_;
  SystemState state_;
  AttachmentRules rules_;
  double grasp_noise_;
  std::uint64_t seed_;
  double dt_;
  std::uint64_t grasps_ = 0;
  std::set<std::string> held_;
  bool was_closed_ = false;
};

}  // namespace skillseq
