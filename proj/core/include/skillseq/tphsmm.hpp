#pragma once

#include <span>
#include <vector>

#include "skillseq/tpgmm.hpp"

namespace skillseq {

/// Lower bound on duration standard deviations, in time steps.
inline constexpr double kDurationStddevFloor = 0.5;

struct DurationModel {
  double mean = 1.0;
  double stddev = kDurationStddevFloor;

  /// Log of the Gaussian pdf evaluated at the integer duration d.
  double log_pdf(int d) const;
  /// ceil(mean + 3 stddev), at least 1.
  int cap() const;
};

/// TP-GMM with explicit-duration semi-Markov dynamics.
///
/// transitions(h, k) is the probability of leaving h for k. Rows have a zero
/// diagonal and sum to at most one; the deficit is the probability of ending
/// the skill in h. final_weights is positive exactly on the final states.
struct TPHSMM {
  TPGMM gmm;
  Matrix transitions;
  std::vector<DurationModel> durations;
  Vector initial;
  Vector final_weights;

  int size() const { return gmm.size(); }
  std::vector<int> initial_states() const;
  std::vector<int> final_states() const;
  void validate() const;
};

struct HsmmFit {
  TPHSMM model;
  /// Max-responsibility labels per demonstration.
  std::vector<std::vector<int>> labels;
};

/// Estimates transitions, durations, initial and final distributions by
/// counting over the max-responsibility labelling of every demonstration.
HsmmFit fit_hsmm(const TPGMM& gmm, std::span<const Demonstration> demos);

/// Candidate durations {1, ..., min(t - 1, cap)} of a segment ending at step t (1-based).
std::vector<int> duration_support(const TPHSMM& model, int state, int t);

/// Log forward variable (T x K, rows indexed by 0-based step).
///
/// Row t holds log alpha_{t+1}(k): the probability that a segment of state k
/// ends at step t+1 jointly with the observations. Emissions are the global
/// GMM densities for the observed prefix and 1 beyond it.
Matrix forward(const TPHSMM& model, const GlobalGMM& global,
               std::span<const Point> observations, int horizon);

struct StateSequence {
  std::vector<int> states;
  double log_score = 0.0;
};

struct ViterbiOptions {
  /// Cap segment durations at DurationModel::cap(); otherwise allow up to t - 1.
  bool cap_durations = true;
};

/// Most likely state sequence of length T given only the first and last observations.
StateSequence modified_viterbi(const TPHSMM& model, const GlobalGMM& global, const Point& first,
                               const Point& last, int T, const ViterbiOptions& options = {});

/// Same, with the global GMM built from the given frames.
StateSequence modified_viterbi(const TPHSMM& model, std::span<const Frame> frames,
                               const Point& first, const Point& last, int T,
                               const ViterbiOptions& options = {});

}  // namespace skillseq
