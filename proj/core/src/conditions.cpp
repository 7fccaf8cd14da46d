#include "skillseq/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Cholesky>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

// Gaussian of a group of points; groups of one get the floor covariance.
RiemannianGaussian fit_group(const Manifold& m, const std::vector<Point>& points,
                             const std::string& label, std::vector<std::string>& warnings) {
  const std::vector<double> weights(points.size(), 1.0);
  if (points.size() >= 2) return fit_gaussian(m, points, weights);
  warnings.push_back(label + ": fitted from " + std::to_string(points.size()) +
                     " demonstration, covariance set to the floor");
  const int d = m.tangent_dim();
  return {weighted_karcher_mean(m, points, weights),
          kCovarianceFloor * Matrix::Identity(d, d)};
}

void check_keys(const std::map<int, ConditionSet>& got, const std::vector<int>& want,
                const char* what) {
  std::set<int> keys;
  for (const auto& [k, _] : got) keys.insert(k);
  if (keys != std::set<int>(want.begin(), want.end())) {
    throw ValidationError(std::string(what) + " keys do not match the model's states");
  }
}

void check_tags(const ConditionSet& set, FrameTime time, const char* what) {
  if (set.empty()) throw ValidationError(std::string(what) + " has an empty entry set");
  for (const auto& e : set) {
    if (e.time != time) {
      throw ValidationError(std::string(what) + " entry in frame '" + e.frame.id +
                            "' is tagged with the wrong time");
    }
  }
}

}  // namespace

std::vector<FrameSlot> condition_frames(const std::vector<std::string>& objects) {
  std::vector<FrameSlot> slots{FrameSlot{kGlobalFrame, kGlobalFrame, Pose{}}};
  for (const auto& o : objects) slots.push_back(FrameSlot::attached(o));
  return slots;
}

void ConditionModels::validate(const TPHSMM& model) const {
  check_keys(precondition, model.initial_states(), "precondition");
  check_keys(final_condition, model.final_states(), "final condition");
  std::set<int> effect_keys;
  for (const auto& [k, per_entity] : effect) {
    effect_keys.insert(k);
    if (!per_entity.contains(kEndEffector)) {
      throw ValidationError("effect of final state " + std::to_string(k) +
                            " lacks the end-effector");
    }
    for (const auto& [entity, set] : per_entity) check_tags(set, FrameTime::Initial, "effect");
  }
  const auto finals = model.final_states();
  if (effect_keys != std::set<int>(finals.begin(), finals.end())) {
    throw ValidationError("effect keys do not match the model's final states");
  }
  for (const auto& [k, set] : precondition) check_tags(set, FrameTime::Initial, "precondition");
  for (const auto& [k, set] : final_condition) check_tags(set, FrameTime::Final, "final condition");
}

ConditionModels learn_conditions(const TPHSMM& model, std::span<const Demonstration> demos,
                                 const StateSpace& space, const std::vector<std::string>& objects,
                                 const ConditionOptions& options) {
  if (demos.empty()) throw ValidationError("conditions: no demonstrations");
  ConditionModels out;
  out.space = space;
  out.objects = objects;
  const auto slots = condition_frames(objects);
  const Manifold& robot = space.robot;

  std::map<int, std::vector<const Demonstration*>> by_initial, by_final;
  for (const auto& demo : demos) {
    if (!demo.initial_state || !demo.final_state) {
      throw ValidationError("demonstration '" + demo.id +
                            "' lacks the initial or final system state");
    }
    const auto labels = state_labels(model.gmm, demo);
    by_initial[labels.front()].push_back(&demo);
    by_final[labels.back()].push_back(&demo);
  }

  auto local_points = [&](const std::vector<const Demonstration*>& group, const FrameSlot& slot,
                          const Manifold& m, bool frame_at_end, auto&& point_of) {
    std::vector<Point> pts;
    for (const auto* demo : group) {
      const SystemState& frame_state = frame_at_end ? *demo->final_state : *demo->initial_state;
      pts.push_back(slot.instantiate(m, space, frame_state).to_local(m, point_of(*demo)));
    }
    return pts;
  };

  for (const auto& [k, group] : by_initial) {
    for (const auto& slot : slots) {
      auto pts = local_points(group, slot, robot, false,
                              [](const Demonstration& d) { return d.trajectory.front(); });
      out.precondition[k].push_back(
          {slot, FrameTime::Initial,
           fit_group(robot, pts, "precondition of state " + std::to_string(k), out.warnings)});
    }
  }

  std::vector<std::string> entities{kEndEffector};
  entities.insert(entities.end(), objects.begin(), objects.end());
  for (const auto& [k, group] : by_final) {
    for (const auto& slot : slots) {
      auto pts = local_points(group, slot, robot, true,
                              [](const Demonstration& d) { return d.trajectory.back(); });
      out.final_condition[k].push_back(
          {slot, FrameTime::Final,
           fit_group(robot, pts, "final condition of state " + std::to_string(k), out.warnings)});
    }
    for (const auto& entity : entities) {
      const Manifold& m = space.manifold_of(entity);
      for (const auto& slot : slots) {
        auto pts = local_points(group, slot, m, false, [&](const Demonstration& d) {
          return d.final_state->entity(entity);
        });
        out.effect[k][entity].push_back(
            {slot, FrameTime::Initial,
             fit_group(m, pts, "effect on '" + entity + "' of state " + std::to_string(k),
                       out.warnings)});
      }
    }
  }

  const double threshold = std::max(2.0 * options.perception_noise, 1e-6);
  for (const auto& o : objects) {
    double moved = 0.0;
    for (const auto& demo : demos) {
      moved = std::max(moved, space.object.distance(demo.initial_state->entity(o),
                                                    demo.final_state->entity(o)));
    }
    out.manipulated[o] = moved > threshold;
  }
  return out;
}

RiemannianGaussian fuse_condition(const Manifold& m, const StateSpace& space,
                                  const ConditionSet& set, const SystemState& initial,
                                  const SystemState* final_state) {
  std::vector<RiemannianGaussian> factors;
  factors.reserve(set.size());
  for (const auto& e : set) {
    const SystemState* state = &initial;
    if (e.time == FrameTime::Final) {
      if (!final_state) throw ValidationError("condition needs the final system state");
      state = final_state;
    }
    factors.push_back(e.frame.instantiate(m, space, *state).to_global(m, e.gaussian));
  }
  if (factors.empty()) throw ValidationError("condition set is empty");
  return gaussian_product(m, factors);
}

SystemState predict_effects(const ConditionModels& conditions, int k_f,
                            const SystemState& initial) {
  const auto it = conditions.effect.find(k_f);
  if (it == conditions.effect.end()) {
    throw ValidationError("no effect model for final state " + std::to_string(k_f));
  }
  SystemState out = initial;
  for (const auto& [entity, set] : it->second) {
    if (entity != kEndEffector) {
      const auto flag = conditions.manipulated.find(entity);
      if (flag == conditions.manipulated.end() || !flag->second) continue;
    }
    const Manifold& m = conditions.space.manifold_of(entity);
    Point mean = fuse_condition(m, conditions.space, set, initial).mean;
    if (entity == kEndEffector) {
      out.end_effector = std::move(mean);
    } else {
      out.objects[entity] = std::move(mean);
    }
  }
  return out;
}

double kl_gaussian(const Manifold& m, const RiemannianGaussian& g1, const RiemannianGaussian& g2) {
  check_spd(g1.covariance, "KL divergence, first argument");
  check_spd(g2.covariance, "KL divergence, second argument");
  const int d = m.tangent_dim();
  const Matrix s1 = m.transport_covariance(g1.mean, g2.mean, g1.covariance);
  const Vector diff = m.log(g2.mean, g1.mean);
  const Eigen::LLT<Matrix> l2(g2.covariance);
  const Eigen::LLT<Matrix> l1(s1);
  const double logdet2 = 2.0 * l2.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet1 = 2.0 * l1.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double trace = l2.solve(s1).trace();
  const double maha = diff.dot(l2.solve(diff));
  return 0.5 * (trace + maha - d + logdet2 - logdet1);
}

}  // namespace skillseq
