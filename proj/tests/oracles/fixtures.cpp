#include "oracles/fixtures.hpp"

#include <map>

#include "skillseq/conditions.hpp"

namespace skillseq::testing {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Matrix random_spd(int d, Rng& rng, double lo, double hi) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = n(rng);
  }
  const Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector ev(d);
  for (int i = 0; i < d; ++i) ev[i] = uniform(rng, lo, hi);
  const Matrix s = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

Tangent random_tangent(int d, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Tangent v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

Point random_point(const Manifold& m, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Point x(m.ambient_dim());
  for (std::size_t b = 0; b < m.blocks().size(); ++b) {
    const Block& block = m.blocks()[b];
    const int off = m.ambient_offset(b);
    if (block.kind == BlockKind::UnitQuaternion) {
      Eigen::Vector4d q(n(rng), n(rng), n(rng), n(rng));
      x.segment<4>(off) = q.normalized();
    } else {
      for (int i = 0; i < block.size; ++i) x[off + i] = uniform(rng, -scale, scale);
    }
  }
  return m.canonicalize(x);
}

Pose random_pose(Rng& rng, double scale) {
  const Manifold m = Manifold::pose();
  return pose_of(m, random_point(m, rng, scale));
}

TPHSMM random_hsmm(int K, Rng& rng, bool dense) {
  TPHSMM h;
  const Manifold m = Manifold::euclidean(1);
  h.gmm.manifold = m;
  h.gmm.frames = {FrameSlot{kGlobalFrame, kGlobalFrame, Pose{}}};
  h.gmm.priors = Vector::Constant(K, 1.0 / K);
  for (int k = 0; k < K; ++k) {
    RiemannianGaussian g{Vector::Constant(1, uniform(rng, -2.0, 2.0)),
                         Matrix::Constant(1, 1, uniform(rng, 0.2, 1.5))};
    h.gmm.components.push_back({g});
  }
  h.transitions = Matrix::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    Vector row = Vector::Zero(K);
    for (int j = 0; j < K; ++j) {
      if (i == j) continue;
      if (dense || uniform(rng, 0.0, 1.0) < 0.6) row[j] = uniform(rng, 0.05, 1.0);
    }
    if (row.sum() > 0.0) row *= uniform(rng, 0.4, 0.95) / row.sum();
    h.transitions.row(i) = row.transpose();
  }
  h.initial = Vector::Zero(K);
  h.final_weights = Vector::Zero(K);
  for (int k = 0; k < K; ++k) {
    h.initial[k] = uniform(rng, 0.0, 1.0) < 0.7 ? uniform(rng, 0.05, 1.0) : 0.0;
    h.final_weights[k] = uniform(rng, 0.0, 1.0) < 0.7 ? uniform(rng, 0.05, 1.0) : 0.0;
    h.durations.push_back({uniform(rng, 1.0, 4.0), uniform(rng, 0.5, 2.0)});
  }
  if (h.initial.sum() == 0.0) h.initial[0] = 1.0;
  if (h.final_weights.sum() == 0.0) h.final_weights[K - 1] = 1.0;
  h.initial /= h.initial.sum();
  h.final_weights /= h.final_weights.sum();
  return h;
}

GlobalGMM identity_global(const TPHSMM& model) {
  const std::vector<Frame> frames{Frame::identity(model.gmm.manifold)};
  return global_gmm(model.gmm, frames);
}

SkillModel mock_skill(const std::string& name, int K, int finals) {
  SkillModel s;
  s.name = name;
  const Manifold& m = s.space.robot;
  const int d = m.tangent_dim();
  const FrameSlot global{kGlobalFrame, kGlobalFrame, Pose{}};
  const RiemannianGaussian g{m.identity(), 1e-2 * Matrix::Identity(d, d)};

  TPHSMM& h = s.hsmm;
  h.gmm.manifold = m;
  h.gmm.frames = {global};
  h.gmm.priors = Vector::Constant(K, 1.0 / K);
  h.gmm.components.assign(K, {g});
  h.transitions = Matrix::Zero(K, K);
  const int chain = K - finals;
  for (int k = 0; k + 1 < chain; ++k) h.transitions(k, k + 1) = 1.0;
  for (int f = 0; f < finals; ++f) h.transitions(chain - 1, chain + f) = 1.0 / finals;
  h.durations.assign(K, {5.0, 1.0});
  h.initial = Vector::Zero(K);
  h.initial[0] = 1.0;
  h.final_weights = Vector::Zero(K);
  for (int f = 0; f < finals; ++f) h.final_weights[chain + f] = 1.0 / finals;

  ConditionModels& c = s.conditions;
  c.space = s.space;
  c.precondition[0] = {{global, FrameTime::Initial, g}};
  for (int f = 0; f < finals; ++f) {
    c.final_condition[chain + f] = {{global, FrameTime::Final, g}};
    c.effect[chain + f][kEndEffector] = {{global, FrameTime::Initial, g}};
  }
  s.mean_length = 5.0 * K;
  s.demo_count = 2;
  s.validate();
  return s;
}

ScenarioConfig fig3_config(std::uint64_t seed) {
  ScenarioConfig c;
  c.name = "fig3";
  c.seed = seed;
  return c;
}

LearnResult learn_fig3(std::uint64_t data_seed, int K, EmInit init) {
  const ScenarioConfig config = fig3_config(data_seed);
  const auto demos = generate_branching_demos(config);
  const auto objects = scenario_objects(config);
  LearnOptions options;
  options.em.init = init;
  return learn_skill("pick", scenario_space(config), objects, condition_frames(objects), demos,
                     K, options);
}

ScenarioConfig chain_config(std::uint64_t seed) {
  ScenarioConfig c;
  c.name = "chain";
  c.seed = seed;
  return c;
}

ChainModels learn_chain(std::uint64_t data_seed) {
  const ScenarioConfig config = chain_config(data_seed);
  ChainModels out;
  out.data = generate_skill_chain(config);
  const StateSpace space = scenario_space(config);
  const int Ks[] = {5, 3};
  const EmInit inits[] = {EmInit::KMeans, EmInit::TimeBinning};
  for (std::size_t i = 0; i < out.data.skill_names.size(); ++i) {
    LearnOptions options;
    options.em.init = inits[i];
    const auto& objects = out.data.skill_objects[i];
    out.skills.push_back(learn_skill(out.data.skill_names[i], space, objects,
                                     condition_frames(objects), out.data.demos[i], Ks[i],
                                     options)
                             .model);
  }
  out.joint = cascade_sequence(out.skills);
  return out;
}

std::map<int, std::string> final_branches(const SkillModel& skill,
                                          std::span<const Demonstration> demos) {
  std::map<int, std::map<std::string, int>> votes;
  for (const auto& d : demos) votes[state_labels(skill.hsmm.gmm, d).back()][d.branch]++;
  std::map<int, std::string> out;
  for (const auto& [k, count] : votes) {
    int best = -1;
    for (const auto& [label, n] : count) {
      if (n > best) {
        best = n;
        out[k] = label;
      }
    }
  }
  return out;
}

}  // namespace skillseq::testing
