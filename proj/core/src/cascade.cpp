#include "skillseq/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

// New slots (and the old frame's pose inside each) that one old frame expands to.
std::vector<std::pair<FrameSlot, Pose>> expand_slot(const FrameSlot& slot,
                                                    const ConditionModels& first, int k_f) {
  if (slot.base == kGlobalFrame) return {{slot, Pose{}}};
  const auto eff = first.effect.find(k_f);
  if (eff == first.effect.end()) {
    throw ValidationError("no effect model for final state " + std::to_string(k_f));
  }
  const bool known = std::find(first.objects.begin(), first.objects.end(), slot.base) !=
                     first.objects.end();
  const auto moved = first.manipulated.find(slot.base);
  const bool manipulated =
      slot.base == kEndEffector || (moved != first.manipulated.end() && moved->second);
  if (!manipulated) {
    // The object keeps the pose it had when the sequence started.
    if (known && !eff->second.contains(slot.base)) {
      throw ValidationError("effect of final state " + std::to_string(k_f) +
                            " has no entry for object '" + slot.base + "' (frame '" + slot.id +
                            "')");
    }
    return {{slot, Pose{}}};
  }
  const auto entries = eff->second.find(slot.base);
  if (entries == eff->second.end()) {
    throw ValidationError("effect of final state " + std::to_string(k_f) +
                          " has no entry for object '" + slot.base + "' (frame '" + slot.id +
                          "')");
  }
  const Manifold& m = first.space.manifold_of(slot.base);
  std::vector<std::pair<FrameSlot, Pose>> out;
  for (const auto& e : entries->second) {
    FrameSlot next{slot.id + "@" + e.frame.id, e.frame.base, e.frame.relative};
    out.emplace_back(std::move(next), pose_of(m, e.gaussian.mean) * slot.relative);
  }
  return out;
}

ConditionSet reframe_set(const ConditionSet& set, const Manifold& m, const ConditionModels& first,
                         int k_f) {
  ConditionSet out;
  for (const auto& entry : set) {
    for (const auto& [slot, pose] : expand_slot(entry.frame, first, k_f)) {
      out.push_back({slot, FrameTime::Initial,
                     Frame::from_pose(m, pose).to_global(m, entry.gaussian)});
    }
  }
  return out;
}

double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

void SkillModel::validate() const {
  hsmm.validate();
  if (!(hsmm.gmm.manifold == space.robot)) {
    throw ValidationError("skill '" + name + "': model manifold differs from the robot manifold");
  }
  conditions.validate(hsmm);
}

void CascadedModel::validate() const {
  joint.validate();
  if (skills.empty()) throw ValidationError("composed model lists no source skills");
  if (static_cast<int>(provenance.size()) != size()) {
    throw ValidationError("provenance does not cover every joint component");
  }
  for (const auto& o : provenance) {
    if (o.skill < 0 || o.skill >= static_cast<int>(skills.size()) || o.source < 0 ||
        o.source >= skills[o.skill].hsmm.size() || static_cast<int>(o.chain.size()) != o.skill) {
      throw ValidationError("provenance entry is inconsistent with the source skills");
    }
  }
}

CascadedModel as_sequence(const SkillModel& skill) {
  CascadedModel out;
  out.joint = skill;
  out.skills = {skill};
  for (int k = 0; k < skill.hsmm.size(); ++k) out.provenance.push_back({0, k, {}});
  return out;
}

Vector entry_transitions(const Manifold& m, const ConditionSet& final_condition,
                         const std::map<int, ConditionSet>& precondition,
                         const std::vector<int>& initial_states) {
  Vector logits(initial_states.size());
  for (std::size_t i = 0; i < initial_states.size(); ++i) {
    const auto pre = precondition.find(initial_states[i]);
    if (pre == precondition.end()) {
      throw ValidationError("no precondition for initial state " +
                            std::to_string(initial_states[i]));
    }
    double total = 0.0;
    int common = 0;
    for (const auto& fin : final_condition) {
      for (const auto& start : pre->second) {
        if (start.frame.id != fin.frame.id) continue;
        total += kl_gaussian(m, fin.gaussian, start.gaussian);
        ++common;
      }
    }
    if (common == 0) {
      throw ValidationError("final and precondition models share no frame");
    }
    logits[i] = -total;
  }
  return (logits.array() - log_sum_exp(logits)).exp();
}

Reframing reframe(const TPGMM& second, const ConditionModels& first_conditions, int k_f) {
  Reframing out;
  std::map<std::string, int> index;
  for (const auto& slot : second.frames) {
    std::vector<std::pair<int, Pose>> targets;
    for (auto& [next, pose] : expand_slot(slot, first_conditions, k_f)) {
      auto [it, inserted] = index.emplace(next.id, static_cast<int>(out.slots.size()));
      if (inserted) out.slots.push_back(next);
      targets.emplace_back(it->second, pose);
    }
    out.targets.push_back(std::move(targets));
  }
  return out;
}

std::vector<std::vector<std::optional<RiemannianGaussian>>> transform_components(
    const TPGMM& second, const Reframing& reframing) {
  const Manifold& m = second.manifold;
  std::vector<std::vector<std::optional<RiemannianGaussian>>> out(
      second.size(), std::vector<std::optional<RiemannianGaussian>>(reframing.slots.size()));
  for (int k = 0; k < second.size(); ++k) {
    for (int p = 0; p < second.frame_count(); ++p) {
      const auto& g = second.components[k][p];
      if (!g) continue;
      for (const auto& [slot, pose] : reframing.targets[p]) {
        if (out[k][slot]) {
          throw ValidationError("two frames of component " + std::to_string(k) +
                                " map onto slot '" + reframing.slots[slot].id + "'");
        }
        out[k][slot] = Frame::from_pose(m, pose).to_global(m, *g);
      }
    }
  }
  return out;
}

CascadedModel cascade_pair(const CascadedModel& first, const SkillModel& next) {
  const TPHSMM& a = first.joint.hsmm;
  const TPHSMM& b = next.hsmm;
  const ConditionModels& ga = first.joint.conditions;
  const ConditionModels& gb = next.conditions;
  if (!(a.gmm.manifold == b.gmm.manifold) || !(first.joint.space == next.space)) {
    throw ValidationError("skill '" + next.name + "' lives on a different manifold");
  }
  const Manifold& m = a.gmm.manifold;
  const std::vector<int> finals = a.final_states();
  const std::vector<int> starts = b.initial_states();
  const int K1 = a.size();
  const int K2 = b.size();
  const int Kf = static_cast<int>(finals.size());
  const int K = K1 + Kf * K2;
  auto dup = [&](int r, int h) { return K1 + r * K2 + h; };

  CascadedModel out;
  TPHSMM& joint = out.joint.hsmm;
  TPGMM& gmm = joint.gmm;
  gmm.manifold = m;
  gmm.frames = a.gmm.frames;
  std::map<std::string, int> slot_index;
  for (int p = 0; p < gmm.frame_count(); ++p) slot_index[gmm.frames[p].id] = p;

  // Transformed duplicates, with their slots mapped into the joint slot list.
  std::vector<std::vector<std::vector<std::optional<RiemannianGaussian>>>> dups(Kf);
  std::vector<std::vector<int>> slot_map(Kf);
  for (int r = 0; r < Kf; ++r) {
    const Reframing rf = reframe(b.gmm, ga, finals[r]);
    dups[r] = transform_components(b.gmm, rf);
    for (const auto& slot : rf.slots) {
      auto [it, inserted] = slot_index.emplace(slot.id, gmm.frame_count());
      if (inserted) gmm.frames.push_back(slot);
      slot_map[r].push_back(it->second);
    }
  }

  const int P = gmm.frame_count();
  gmm.components.assign(K, std::vector<std::optional<RiemannianGaussian>>(P));
  gmm.priors = Vector::Zero(K);
  for (int k = 0; k < K1; ++k) {
    for (int p = 0; p < a.gmm.frame_count(); ++p) gmm.components[k][p] = a.gmm.components[k][p];
    gmm.priors[k] = a.gmm.priors[k];
  }
  for (int r = 0; r < Kf; ++r) {
    for (int h = 0; h < K2; ++h) {
      for (std::size_t j = 0; j < slot_map[r].size(); ++j) {
        gmm.components[dup(r, h)][slot_map[r][j]] = dups[r][h][j];
      }
      gmm.priors[dup(r, h)] = b.gmm.priors[h];
    }
  }
  gmm.priors /= gmm.priors.sum();

  joint.transitions = Matrix::Zero(K, K);
  joint.transitions.topLeftCorner(K1, K1) = a.transitions;
  joint.durations = a.durations;
  joint.initial = Vector::Zero(K);
  joint.initial.head(K1) = a.initial;
  joint.final_weights = Vector::Zero(K);
  for (int r = 0; r < Kf; ++r) {
    const int kf = finals[r];
    const double exit = 1.0 - a.transitions.row(kf).sum();
    if (!(exit > 1e-15)) {
      throw NumericalError("final state " + std::to_string(kf) +
                           " has no outgoing probability mass to enter skill '" + next.name + "'");
    }
    const auto fin = ga.final_condition.find(kf);
    if (fin == ga.final_condition.end()) {
      throw ValidationError("no final condition for state " + std::to_string(kf));
    }
    const Vector entry = entry_transitions(m, fin->second, gb.precondition, starts);
    for (std::size_t i = 0; i < starts.size(); ++i) {
      joint.transitions(kf, dup(r, starts[i])) = exit * entry[i];
    }
    joint.transitions.block(dup(r, 0), dup(r, 0), K2, K2) = b.transitions;
    joint.durations.insert(joint.durations.end(), b.durations.begin(), b.durations.end());
    for (int h = 0; h < K2; ++h) {
      joint.final_weights[dup(r, h)] = a.final_weights[kf] * b.final_weights[h];
    }
  }
  joint.final_weights /= joint.final_weights.sum();

  // Conditions of the joint model.
  ConditionModels& gj = out.joint.conditions;
  gj.space = ga.space;
  gj.objects = ga.objects;
  for (const auto& o : gb.objects) {
    if (std::find(gj.objects.begin(), gj.objects.end(), o) == gj.objects.end()) {
      gj.objects.push_back(o);
    }
  }
  gj.manipulated = ga.manipulated;
  for (const auto& [o, flag] : gb.manipulated) gj.manipulated[o] = gj.manipulated[o] || flag;
  gj.precondition = ga.precondition;
  gj.warnings = ga.warnings;
  gj.warnings.insert(gj.warnings.end(), gb.warnings.begin(), gb.warnings.end());
  for (int r = 0; r < Kf; ++r) {
    const int kf = finals[r];
    for (const auto& [h, set] : gb.final_condition) gj.final_condition[dup(r, h)] = set;
    for (const auto& [h, per_entity] : gb.effect) {
      auto& target = gj.effect[dup(r, h)];
      target = ga.effect.at(kf);
      for (const auto& [entity, set] : per_entity) {
        const auto moved = gb.manipulated.find(entity);
        const bool changes = entity == kEndEffector ||
                             (moved != gb.manipulated.end() && moved->second);
        if (changes || !target.contains(entity)) {
          target[entity] = reframe_set(set, gj.space.manifold_of(entity), ga, kf);
        }
      }
    }
  }

  out.joint.name = first.joint.name + "+" + next.name;
  out.joint.space = first.joint.space;
  out.joint.mean_length = first.joint.mean_length + next.mean_length;
  out.joint.sample_rate = first.joint.sample_rate;
  out.joint.demo_count = first.joint.demo_count + next.demo_count;
  out.joint.seed = first.joint.seed;
  out.joint.final_log_likelihood = first.joint.final_log_likelihood + next.final_log_likelihood;

  out.skills = first.skills;
  out.skills.push_back(next);
  out.provenance = first.provenance;
  const int index = static_cast<int>(first.skills.size());
  for (int r = 0; r < Kf; ++r) {
    const ComponentOrigin& parent = first.provenance[finals[r]];
    std::vector<int> chain = parent.chain;
    chain.push_back(parent.source);
    for (int h = 0; h < K2; ++h) out.provenance.push_back({index, h, chain});
  }
  return out;
}

CascadedModel cascade_sequence(std::span<const SkillModel> skills) {
  if (skills.empty()) throw ValidationError("skill sequence is empty");
  CascadedModel out = as_sequence(skills.front());
  for (std::size_t i = 1; i < skills.size(); ++i) {
    try {
      out = cascade_pair(out, skills[i]);
    } catch (const ValidationError& e) {
      throw ValidationError("composing skill " + std::to_string(i) + " ('" + skills[i].name +
                            "'): " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("composing skill " + std::to_string(i) + " ('" + skills[i].name +
                           "'): " + e.what());
    }
  }
  return out;
}

int default_horizon(const CascadedModel& model) {
  double total = 0.0;
  for (const auto& s : model.skills) total += s.mean_length;
  return std::max(2, static_cast<int>(std::lround(total)));
}

std::vector<SkillSegment> split_by_skill(const CascadedModel& model, const StateSequence& seq) {
  std::vector<SkillSegment> out;
  for (int t = 0; t < static_cast<int>(seq.states.size()); ++t) {
    const int k = seq.states[t];
    const ComponentOrigin& o = model.provenance.at(k);
    if (out.empty() || out.back().skill != o.skill) {
      out.push_back({o.skill, t, 0, {}, {}});
    }
    auto& seg = out.back();
    ++seg.length;
    seg.joint_states.push_back(k);
    seg.source_states.push_back(o.source);
  }
  return out;
}

SequencePlan plan_sequence(const CascadedModel& model, const SystemState& initial,
                           const SystemState& goal, int horizon,
                           const ViterbiOptions& options) {
  const TPHSMM& hsmm = model.joint.hsmm;
  const Manifold& m = hsmm.gmm.manifold;
  SequencePlan plan;
  plan.horizon = horizon > 0 ? horizon : default_horizon(model);
  const auto frames = instantiate_frames(m, model.joint.space, hsmm.gmm.frames, initial);
  plan.sequence =
      modified_viterbi(hsmm, frames, initial.end_effector, goal.end_effector, plan.horizon,
                       options);
  plan.segments = split_by_skill(model, plan.sequence);
  return plan;
}

}  // namespace skillseq
