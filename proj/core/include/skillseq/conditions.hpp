#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "skillseq/tphsmm.hpp"

namespace skillseq {

/// Which system state instantiates the frame of a condition entry.
enum class FrameTime { Initial, Final };

/// One Gaussian of a condition model, expressed in the frame given by `frame`.
struct ConditionEntry {
  FrameSlot frame;
  FrameTime time = FrameTime::Initial;
  RiemannianGaussian gaussian;
};

using ConditionSet = std::vector<ConditionEntry>;

/// Precondition, final-condition and effect models of one skill.
struct ConditionModels {
  StateSpace space;
  /// Objects the skill is conditioned on.
  std::vector<std::string> objects;
  /// Precondition: initial component -> robot state Gaussians, frames at t = 1.
  std::map<int, ConditionSet> precondition;
  /// Final condition: final component -> robot state Gaussians, frames at t = T.
  std::map<int, ConditionSet> final_condition;
  /// Effect: final component -> entity ("ee" or object) -> final pose Gaussians, frames at t = 1.
  std::map<int, std::map<std::string, ConditionSet>> effect;
  /// Objects whose pose the skill changes; others keep their initial pose.
  std::map<std::string, bool> manipulated;
  /// Groups fitted from fewer than two demonstrations.
  std::vector<std::string> warnings;

  /// Checks the keys against the model's initial and final states and the entry tags.
  void validate(const TPHSMM& model) const;
};

struct ConditionOptions {
  /// Perception noise scale; an object is manipulated if it moves more than twice this.
  double perception_noise = 0.0;
};

/// Frame slots used by the condition models: the global frame, then one per object.
std::vector<FrameSlot> condition_frames(const std::vector<std::string>& objects);

/// Fits the condition models from demonstrations carrying initial and final system states.
ConditionModels learn_conditions(const TPHSMM& model, std::span<const Demonstration> demos,
                                 const StateSpace& space, const std::vector<std::string>& objects,
                                 const ConditionOptions& options = {});

/// Fuses the entries of one condition set, each mapped to world coordinates.
RiemannianGaussian fuse_condition(const Manifold& m, const StateSpace& space,
                                  const ConditionSet& set, const SystemState& initial,
                                  const SystemState* final_state = nullptr);

/// Predicted system state after the skill ends in final component k_f.
SystemState predict_effects(const ConditionModels& conditions, int k_f,
                            const SystemState& initial);

/// KL(g1 || g2), evaluated in the tangent space at g2's mean.
double kl_gaussian(const Manifold& m, const RiemannianGaussian& g1, const RiemannianGaussian& g2);

}  // namespace skillseq
