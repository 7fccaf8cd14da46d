#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skillseq/cascade.hpp"
#include "skillseq/lqt.hpp"
#include "skillseq/workspace.hpp"

namespace skillseq {

struct ExecutionOptions {
  /// Re-observe the system and re-instantiate the skill's own frames before
  /// every skill. When false, the whole plan is tracked with the joint model
  /// instantiated once from the first observation.
  bool closed_loop = true;
  double perception_noise = 0.0;
  std::uint64_t seed = 0;
  TrackingSettings tracking;
  /// Largest accepted distance between the tracked end state and the last reference mean.
  double divergence_threshold = 0.5;
};

struct ExecutedSkill {
  int skill = 0;
  int start = 0;
  int length = 0;
  double terminal_error = 0.0;
  double track_seconds = 0.0;
};

struct ExecutionLog {
  /// End-effector commands sent to the simulator, one per time step.
  std::vector<Point> commands;
  std::vector<ExecutedSkill> skills;
  SystemState final_state;
};

/// Executes a plan on the simulator, skill by skill.
ExecutionLog execute_sequence(const CascadedModel& model, const SequencePlan& plan,
                              Simulator& simulator, const ExecutionOptions& options = {});

/// One seeded trial of a composed chain model on a fresh scene.
struct TrialSettings {
  ScenarioConfig scenario;
  ExecutionOptions execution;
  AttachmentRules attachment;
  /// In-hand offset noise of the simulator on grasp.
  double grasp_noise = 0.0;
  double success_tolerance = 0.05;
  /// Plan horizon; 0 uses the model default.
  int horizon = 0;
  ViterbiOptions viterbi;
};

struct TrialOutcome {
  std::string branch;
  SequencePlan plan;
  ExecutionLog log;
  /// Position distance of every object from its goal, maximized over objects.
  double object_error = 0.0;
  /// object_error plus the end-effector position error relative to the first object.
  double terminal_error = 0.0;
  bool success = false;
  double plan_seconds = 0.0;
};

/// Samples a scene from `seed`, plans from a perceived initial state to the
/// scripted goal of `branch`, and executes the plan on the simulator.
TrialOutcome run_chain_trial(const CascadedModel& model, const TrialSettings& settings,
                             std::uint64_t seed, const std::string& branch);

}  // namespace skillseq
