#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skillseq/conditions.hpp"
#include "skillseq/tphsmm.hpp"

namespace skillseq {

/// A learned skill: TP-HSMM plus its condition models and bookkeeping.
struct SkillModel {
  std::string name;
  StateSpace space;
  TPHSMM hsmm;
  ConditionModels conditions;
  /// Average demonstration length in time steps.
  double mean_length = 0.0;
  double sample_rate = 50.0;
  int demo_count = 0;
  std::uint64_t seed = 0;
  double final_log_likelihood = 0.0;

  void validate() const;
};

/// Where a joint component comes from.
struct ComponentOrigin {
  int skill = 0;   // position in the skill sequence
  int source = 0;  // component index within that skill
  /// Source indices of the final components that led into this duplicate, one per earlier skill.
  std::vector<int> chain;

  bool operator==(const ComponentOrigin&) const = default;
};

/// Joint model of a skill sequence together with the models it was built from.
struct CascadedModel {
  SkillModel joint;
  std::vector<ComponentOrigin> provenance;
  std::vector<SkillModel> skills;

  int size() const { return joint.hsmm.size(); }
  void validate() const;
};

/// Wraps a single skill as a one-element sequence.
CascadedModel as_sequence(const SkillModel& skill);

/// Entry row from final state k_f of the first model into the initial states of the second:
/// proportional to exp(-sum over shared frames of KL(final condition || precondition)),
/// normalized over the initial states. Indexed like second.initial_states().
Vector entry_transitions(const Manifold& m, const ConditionSet& final_condition,
                         const std::map<int, ConditionSet>& precondition,
                         const std::vector<int>& initial_states);

/// Re-anchors the frames of a second-skill model on the predicted effects
/// of the first skill ending in k_f.
struct Reframing {
  std::vector<FrameSlot> slots;
  /// For each old frame, the new slots it expands to and the pose of the old
  /// frame in each new slot's coordinates.
  std::vector<std::vector<std::pair<int, Pose>>> targets;
};

Reframing reframe(const TPGMM& second, const ConditionModels& first_conditions, int k_f);

/// Transforms every component of a second-skill TPGMM as prescribed by a reframing.
/// The result has one entry per reframing slot (empty where a component has none).
std::vector<std::vector<std::optional<RiemannianGaussian>>> transform_components(
    const TPGMM& second, const Reframing& reframing);

/// Appends skill `next` to a sequence (one left-fold step).
CascadedModel cascade_pair(const CascadedModel& first, const SkillModel& next);

/// Left fold of cascade_pair over the skills.
CascadedModel cascade_sequence(std::span<const SkillModel> skills);

struct SkillSegment {
  int skill = 0;
  int start = 0;   // first time step (0-based)
  int length = 0;
  std::vector<int> joint_states;
  std::vector<int> source_states;
};

struct SequencePlan {
  StateSequence sequence;
  std::vector<SkillSegment> segments;
  int horizon = 0;
};

/// Default horizon: accumulated average length of all skills.
int default_horizon(const CascadedModel& model);

/// Decodes the most likely joint state sequence from the initial and goal
/// system states, then splits it per skill.
SequencePlan plan_sequence(const CascadedModel& model, const SystemState& initial,
                           const SystemState& goal, int horizon = 0,
                           const ViterbiOptions& options = {});

/// Splits a decoded joint sequence at skill boundaries.
std::vector<SkillSegment> split_by_skill(const CascadedModel& model, const StateSequence& seq);

}  // namespace skillseq
