#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "skillseq/cascade.hpp"
#include "skillseq/learn.hpp"
#include "skillseq/workspace.hpp"

namespace skillseq::testing {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
Matrix random_spd(int d, Rng& rng, double lo = 0.1, double hi = 2.0);
Tangent random_tangent(int d, Rng& rng, double scale = 1.0);
/// Random point: Euclidean blocks uniform in [-scale, scale], uniform quaternions.
Point random_point(const Manifold& m, Rng& rng, double scale = 1.0);
Pose random_pose(Rng& rng, double scale = 1.0);

/// 1-D Euclidean TP-HSMM with a single global frame and random parameters.
/// Dense models have every off-diagonal transition positive.
TPHSMM random_hsmm(int K, Rng& rng, bool dense = true);
GlobalGMM identity_global(const TPHSMM& model);

/// Skill on the default state space with a global frame only: state 0 is the
/// single initial state, the chain 0 -> 1 -> ... -> K - finals - 1 then fans
/// out to `finals` terminal states.
SkillModel mock_skill(const std::string& name, int K, int finals);

/// Fig. 3 dataset of the acceptance suite and its learned skill.
ScenarioConfig fig3_config(std::uint64_t seed = 7);
LearnResult learn_fig3(std::uint64_t data_seed, int K, EmInit init = EmInit::KMeans);

/// Two-skill chain of the acceptance suite: data, learned skills and their cascade.
ScenarioConfig chain_config(std::uint64_t seed = 3);
struct ChainModels {
  ChainDataset data;
  std::vector<SkillModel> skills;
  CascadedModel joint;
};
ChainModels learn_chain(std::uint64_t data_seed = 3);

/// Branch label of each final state: majority label of the training demos ending there.
std::map<int, std::string> final_branches(const SkillModel& skill,
                                          std::span<const Demonstration> demos);

}  // namespace skillseq::testing
