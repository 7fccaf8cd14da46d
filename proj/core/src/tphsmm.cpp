#include "skillseq/tphsmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_or_neg_inf(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// For each state j, the states i with a positive transition i -> j.
std::vector<std::vector<int>> predecessors(const Matrix& a) {
  std::vector<std::vector<int>> preds(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      if (i != j && a(i, j) > 0.0) preds[j].push_back(i);
    }
  }
  return preds;
}

void check_global(const TPHSMM& model, const GlobalGMM& global) {
  if (global.size() != model.size()) {
    throw ValidationError("global GMM has " + std::to_string(global.size()) +
                          " components, model has " + std::to_string(model.size()));
  }
}

}  // namespace

double DurationModel::log_pdf(int d) const {
  const double z = (d - mean) / stddev;
  return -0.5 * z * z - std::log(stddev * std::sqrt(2.0 * std::numbers::pi));
}

int DurationModel::cap() const {
  return std::max(1, static_cast<int>(std::ceil(mean + 3.0 * stddev)));
}

std::vector<int> TPHSMM::initial_states() const {
  std::vector<int> out;
  for (int k = 0; k < initial.size(); ++k) {
    if (initial[k] > 0.0) out.push_back(k);
  }
  return out;
}

std::vector<int> TPHSMM::final_states() const {
  std::vector<int> out;
  for (int k = 0; k < final_weights.size(); ++k) {
    if (final_weights[k] > 0.0) out.push_back(k);
  }
  return out;
}

void TPHSMM::validate() const {
  gmm.validate();
  const int K = size();
  if (transitions.rows() != K || transitions.cols() != K) {
    throw ValidationError("transition matrix must be " + std::to_string(K) + "x" +
                          std::to_string(K));
  }
  for (int h = 0; h < K; ++h) {
    if (transitions(h, h) != 0.0) {
      throw ValidationError("transition matrix has a nonzero diagonal at state " +
                            std::to_string(h));
    }
    if ((transitions.row(h).array() < 0.0).any() || transitions.row(h).sum() > 1.0 + 1e-9) {
      throw ValidationError("transition row " + std::to_string(h) + " is not substochastic");
    }
  }
  if (static_cast<int>(durations.size()) != K) {
    throw ValidationError("expected one duration model per state");
  }
  for (int k = 0; k < K; ++k) {
    if (!(durations[k].stddev >= kDurationStddevFloor - 1e-12) ||
        !std::isfinite(durations[k].mean)) {
      throw ValidationError("duration model of state " + std::to_string(k) +
                            " is below the standard-deviation floor");
    }
  }
  for (const auto* v : {&initial, &final_weights}) {
    if (v->size() != K || (v->array() < 0.0).any() || std::abs(v->sum() - 1.0) > 1e-9) {
      throw ValidationError(v == &initial ? "initial distribution is not a probability vector"
                                          : "final weights are not a probability vector");
    }
  }
  // Every final state must be reachable from some initial state.
  std::vector<bool> seen(K, false);
  std::vector<int> stack = initial_states();
  for (int k : stack) seen[k] = true;
  while (!stack.empty()) {
    const int h = stack.back();
    stack.pop_back();
    for (int k = 0; k < K; ++k) {
      if (transitions(h, k) > 0.0 && !seen[k]) {
        seen[k] = true;
        stack.push_back(k);
      }
    }
  }
  for (int k : final_states()) {
    if (!seen[k]) {
      throw ValidationError("final state " + std::to_string(k) +
                            " is unreachable from the initial states");
    }
  }
}

HsmmFit fit_hsmm(const TPGMM& gmm, std::span<const Demonstration> demos) {
  if (demos.empty()) throw ValidationError("HSMM fit: no demonstrations");
  const int K = gmm.size();
  HsmmFit fit;
  Matrix counts = Matrix::Zero(K, K);
  Vector ends = Vector::Zero(K);
  Vector starts = Vector::Zero(K);
  std::vector<std::vector<int>> runs(K);

  for (const auto& demo : demos) {
    auto labels = state_labels(gmm, demo);
    starts[labels.front()] += 1.0;
    ends[labels.back()] += 1.0;
    int run = 1;
    for (std::size_t t = 1; t <= labels.size(); ++t) {
      if (t < labels.size() && labels[t] == labels[t - 1]) {
        ++run;
        continue;
      }
      runs[labels[t - 1]].push_back(run);
      if (t < labels.size()) counts(labels[t - 1], labels[t]) += 1.0;
      run = 1;
    }
    fit.labels.push_back(std::move(labels));
  }

  TPHSMM& model = fit.model;
  model.gmm = gmm;
  model.transitions = Matrix::Zero(K, K);
  model.durations.resize(K);
  for (int h = 0; h < K; ++h) {
    if (runs[h].empty()) {
      throw ValidationError("state " + std::to_string(h) +
                            " is never visited by any demonstration; K is too large");
    }
    const double out = counts.row(h).sum() + ends[h];
    model.transitions.row(h) = counts.row(h) / out;

    double mean = 0.0;
    for (int r : runs[h]) mean += r;
    mean /= static_cast<double>(runs[h].size());
    double var = 0.0;
    for (int r : runs[h]) var += (r - mean) * (r - mean);
    var /= static_cast<double>(runs[h].size());
    model.durations[h] = {mean, std::max(kDurationStddevFloor, std::sqrt(var))};
  }
  model.initial = starts / starts.sum();
  model.final_weights = ends / ends.sum();
  return fit;
}

std::vector<int> duration_support(const TPHSMM& model, int state, int t) {
  if (t < 1) throw ValidationError("duration support: t must be at least 1");
  const int hi = std::min(t - 1, model.durations.at(state).cap());
  std::vector<int> out;
  for (int d = 1; d <= hi; ++d) out.push_back(d);
  return out;
}

Matrix forward(const TPHSMM& model, const GlobalGMM& global,
               std::span<const Point> observations, int horizon) {
  check_global(model, global);
  const int K = model.size();
  const int T = horizon;
  const int n_obs = static_cast<int>(observations.size());
  if (T < 1 || n_obs > T) {
    throw ValidationError("forward: need 1 <= observed length <= horizon");
  }

  // cum(t, j): log emission of state j summed over steps 1..t.
  Matrix cum = Matrix::Zero(T + 1, K);
  for (int j = 0; j < K; ++j) {
    const GaussianDensity density(global.manifold, global.components[j]);
    for (int t = 1; t <= T; ++t) {
      const double e = t <= n_obs ? density.log_pdf(observations[t - 1]) : 0.0;
      cum(t, j) = cum(t - 1, j) + e;
    }
  }
  const auto preds = predecessors(model.transitions);
  Matrix log_a(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) log_a(i, j) = log_or_neg_inf(model.transitions(i, j));
  }

  Matrix alpha = Matrix::Constant(T, K, kNegInf);
  std::vector<double> terms;
  for (int t = 1; t <= T; ++t) {
    for (int j = 0; j < K; ++j) {
      terms.clear();
      if (model.initial[j] > 0.0) {
        terms.push_back(std::log(model.initial[j]) + model.durations[j].log_pdf(t) + cum(t, j));
      }
      for (int tau = 1; tau < t; ++tau) {
        const double stay = model.durations[j].log_pdf(tau) + cum(t, j) - cum(t - tau, j);
        for (int i : preds[j]) {
          const double prev = alpha(t - tau - 1, i);
          if (prev == kNegInf) continue;
          terms.push_back(prev + log_a(i, j) + stay);
        }
      }
      if (terms.empty()) continue;
      double mx = kNegInf;
      for (double v : terms) mx = std::max(mx, v);
      double acc = 0.0;
      for (double v : terms) acc += std::exp(v - mx);
      alpha(t - 1, j) = mx + std::log(acc);
    }
    if (alpha.row(t - 1).maxCoeff() == kNegInf) {
      throw NumericalError("forward: every state has zero probability at step " +
                           std::to_string(t) + "; observations do not fit the model");
    }
  }
  return alpha;
}

StateSequence modified_viterbi(const TPHSMM& model, const GlobalGMM& global, const Point& first,
                               const Point& last, int T, const ViterbiOptions& options) {
  check_global(model, global);
  if (T < 2) throw ValidationError("modified Viterbi: T must be at least 2");
  const int K = model.size();

  Vector b1(K), bT(K), log_pi(K), log_fin(K);
  for (int j = 0; j < K; ++j) {
    const GaussianDensity density(global.manifold, global.components[j]);
    b1[j] = density.log_pdf(first);
    bT[j] = density.log_pdf(last);
    log_pi[j] = log_or_neg_inf(model.initial[j]);
    log_fin[j] = log_or_neg_inf(model.final_weights[j]);
  }
  // Log emission of a segment of state j covering steps s..t (1-based).
  auto segment = [&](int j, int s, int t) {
    return (s == 1 ? b1[j] : 0.0) + (t == T ? bT[j] : 0.0);
  };

  const auto preds = predecessors(model.transitions);
  std::vector<int> caps(K);
  for (int j = 0; j < K; ++j) caps[j] = options.cap_durations ? model.durations[j].cap() : T;

  // delta(t - 1, j); back-pointers hold predecessor (-1 for the start) and duration.
  Matrix delta = Matrix::Constant(T, K, kNegInf);
  std::vector<int> from(static_cast<std::size_t>(T) * K, -2);
  std::vector<int> dur(static_cast<std::size_t>(T) * K, 0);
  auto at = [K](int t, int j) { return static_cast<std::size_t>(t - 1) * K + j; };

  for (int t = 1; t <= T; ++t) {
    for (int j = 0; j < K; ++j) {
      double best = kNegInf;
      int best_from = -2;
      int best_d = 0;
      if (log_pi[j] > kNegInf) {
        best = log_pi[j] + model.durations[j].log_pdf(t) + segment(j, 1, t);
        best_from = -1;
        best_d = t;
      }
      const int dmax = std::min(t - 1, caps[j]);
      for (int i : preds[j]) {
        const double log_a = std::log(model.transitions(i, j));
        for (int d = dmax; d >= 1; --d) {
          const double prev = delta(t - d - 1, i);
          if (prev == kNegInf) continue;
          const double v = prev + log_a + model.durations[j].log_pdf(d) + segment(j, t - d + 1, t);
          if (v > best) {
            best = v;
            best_from = i;
            best_d = d;
          }
        }
      }
      delta(t - 1, j) = best;
      from[at(t, j)] = best_from;
      dur[at(t, j)] = best_d;
    }
  }

  double best = kNegInf;
  int end_state = -1;
  for (int j = 0; j < K; ++j) {
    if (log_fin[j] == kNegInf) continue;
    const double v = delta(T - 1, j) + log_fin[j];
    if (v > best) {
      best = v;
      end_state = j;
    }
  }
  if (end_state < 0) {
    std::string blocked;
    for (int j : model.final_states()) {
      blocked += (blocked.empty() ? "" : ", ") + std::to_string(j);
    }
    throw NumericalError("modified Viterbi: no positive-probability sequence of length " +
                         std::to_string(T) + " ends in a final state (final states: " +
                         blocked + ")");
  }

  StateSequence out;
  out.log_score = best;
  out.states.assign(T, -1);
  int t = T;
  int j = end_state;
  while (t >= 1) {
    const int d = dur[at(t, j)];
    const int prev = from[at(t, j)];
    for (int s = t - d + 1; s <= t; ++s) out.states[s - 1] = j;
    t -= d;
    if (prev < 0) break;
    j = prev;
  }
  return out;
}

StateSequence modified_viterbi(const TPHSMM& model, std::span<const Frame> frames,
                               const Point& first, const Point& last, int T,
                               const ViterbiOptions& options) {
  return modified_viterbi(model, global_gmm(model.gmm, frames), first, last, T, options);
}

}  // namespace skillseq
