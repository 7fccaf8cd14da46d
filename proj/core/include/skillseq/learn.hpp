#pragma once

#include <span>
#include <string>
#include <vector>

#include "skillseq/cascade.hpp"
#include "skillseq/conditions.hpp"
#include "skillseq/tpgmm.hpp"

namespace skillseq {

struct LearnOptions {
  EmOptions em;
  ConditionOptions conditions;
};

struct LearnResult {
  SkillModel model;
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  int reseeds = 0;
};

/// EM on the demonstrations, then HSMM counting, then condition models.
LearnResult learn_skill(const std::string& name, const StateSpace& space,
                        const std::vector<std::string>& objects,
                        const std::vector<FrameSlot>& slots, std::span<const Demonstration> demos,
                        int K, const LearnOptions& options = {});

}  // namespace skillseq
