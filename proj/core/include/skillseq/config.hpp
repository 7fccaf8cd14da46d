#pragma once

#include <string>

#include "skillseq/lqt.hpp"
#include "skillseq/tphsmm.hpp"
#include "skillseq/tpgmm.hpp"
#include "skillseq/workspace.hpp"

namespace skillseq {

/// Every tunable of the pipeline in one place. Loaded from a JSON file whose
/// sections mirror the members; absent keys keep their defaults and unknown
/// keys are rejected.
struct ToolConfig {
  TrackingSettings tracking;
  AttachmentRules attachment;
  double em_tolerance = 1e-6;
  int em_max_iterations = 200;
  EmInit em_init = EmInit::TimeBinning;
  int em_restarts = 1;
  ViterbiOptions viterbi;
  double divergence_threshold = 0.5;
  /// Distance below which an executed sequence counts as a success.
  double success_tolerance = 0.05;

  void validate() const;
};

ToolConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ToolConfig& config);
/// Defaults when path is empty, else the parsed file.
ToolConfig load_config(const std::string& path);

}  // namespace skillseq
