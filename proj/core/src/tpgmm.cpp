#include "skillseq/tpgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "skillseq/error.hpp"

namespace skillseq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// A component whose total responsibility drops below this is considered empty.
constexpr double kEmptyMass = 1e-6;

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Samples of all demos, pooled in order, expressed in every frame.
struct LocalData {
  int n = 0;
  std::vector<std::vector<Point>> per_frame;  // [p][i]
  std::vector<int> demo_of;                   // sample -> demo
  std::vector<int> step_of;                   // sample -> time index in its demo
};

LocalData build_local_data(const Manifold& m, std::span<const Demonstration> demos,
                           int frame_count) {
  LocalData data;
  data.per_frame.resize(frame_count);
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const auto& demo = demos[d];
    if (static_cast<int>(demo.frames.size()) != frame_count) {
      throw ValidationError("demonstration '" + demo.id + "' has " +
                            std::to_string(demo.frames.size()) + " frames, expected " +
                            std::to_string(frame_count));
    }
    for (int p = 0; p < frame_count; ++p) {
      auto local = to_frame(m, demo.trajectory, demo.frames[p]);
      data.per_frame[p].insert(data.per_frame[p].end(), local.begin(), local.end());
    }
    for (std::size_t t = 0; t < demo.trajectory.size(); ++t) {
      data.demo_of.push_back(static_cast<int>(d));
      data.step_of.push_back(static_cast<int>(t));
    }
  }
  data.n = static_cast<int>(data.demo_of.size());
  return data;
}

// N x K log of pi_k * prod_p N(x^(p) | component k, frame p).
Matrix joint_log_terms(const TPGMM& model, const std::vector<std::vector<Point>>& per_frame,
                       int n) {
  const int K = model.size();
  Matrix out(n, K);
  for (int k = 0; k < K; ++k) {
    const double log_prior = model.priors[k] > 0.0 ? std::log(model.priors[k]) : kNegInf;
    out.col(k).setConstant(log_prior);
    for (int p = 0; p < model.frame_count(); ++p) {
      const auto& g = model.components[k][p];
      if (!g) continue;
      const GaussianDensity density(model.manifold, *g);
      for (int i = 0; i < n; ++i) out(i, k) += density.log_pdf(per_frame[p][i]);
    }
  }
  return out;
}

double e_step(const Matrix& log_terms, Matrix& resp) {
  resp.resize(log_terms.rows(), log_terms.cols());
  double total = 0.0;
  for (int i = 0; i < log_terms.rows(); ++i) {
    const double norm = log_sum_exp(log_terms.row(i).transpose());
    if (!std::isfinite(norm)) {
      throw NumericalError("EM: sample " + std::to_string(i) +
                           " has zero likelihood under every component");
    }
    total += norm;
    resp.row(i) = (log_terms.row(i).array() - norm).exp();
  }
  return total;
}

void m_step(TPGMM& model, const LocalData& data, const Matrix& resp, int iteration,
            const EmOptions& options) {
  const int K = model.size();
  model.priors = resp.colwise().sum().transpose() / static_cast<double>(data.n);
  for (int p = 0; p < model.frame_count(); ++p) {
    if (options.on_m_step) options.on_m_step(iteration, p, resp);
    for (int k = 0; k < K; ++k) {
      const Vector w = resp.col(k);
      model.components[k][p] = fit_gaussian(
          model.manifold, data.per_frame[p], std::span<const double>(w.data(), w.size()));
    }
  }
}

Matrix time_binning(std::span<const Demonstration> demos, const LocalData& data, int K) {
  Matrix resp = Matrix::Zero(data.n, K);
  for (int i = 0; i < data.n; ++i) {
    const auto len = static_cast<long>(demos[data.demo_of[i]].trajectory.size());
    const long k = std::min<long>(K - 1, static_cast<long>(data.step_of[i]) * K / len);
    resp(i, k) = 1.0;
  }
  return resp;
}

// k-means++ with restarts on the concatenated frame-local tangent coordinates.
Matrix kmeans(const Manifold& m, const LocalData& data, int K, std::uint64_t seed,
              int restarts) {
  const int P = static_cast<int>(data.per_frame.size());
  const int d = m.tangent_dim();
  const Point origin = m.identity();
  Matrix features(data.n, P * d);
  for (int i = 0; i < data.n; ++i) {
    for (int p = 0; p < P; ++p) {
      features.block(i, p * d, 1, d) = m.log(origin, data.per_frame[p][i]).transpose();
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<int> best_labels;
  double best_inertia = std::numeric_limits<double>::infinity();
  constexpr int kIterations = 100;

  for (int restart = 0; restart < restarts; ++restart) {
    Matrix centers(K, features.cols());
    std::uniform_int_distribution<int> pick(0, data.n - 1);
    centers.row(0) = features.row(pick(rng));
    Vector dist2 = Vector::Constant(data.n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < K; ++c) {
      for (int i = 0; i < data.n; ++i) {
        dist2[i] = std::min(dist2[i], (features.row(i) - centers.row(c - 1)).squaredNorm());
      }
      const double total = dist2.sum();
      int chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double r = u(rng);
        for (chosen = 0; chosen < data.n - 1; ++chosen) {
          r -= dist2[chosen];
          if (r <= 0.0) break;
        }
      } else {
        chosen = pick(rng);
      }
      centers.row(c) = features.row(chosen);
    }

    std::vector<int> labels(data.n, -1);
    double inertia = 0.0;
    for (int it = 0; it < kIterations; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (int i = 0; i < data.n; ++i) {
        int arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int c = 0; c < K; ++c) {
          const double v = (features.row(i) - centers.row(c)).squaredNorm();
          if (v < best) {
            best = v;
            arg = c;
          }
        }
        inertia += best;
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sums = Matrix::Zero(K, features.cols());
      Vector counts = Vector::Zero(K);
      for (int i = 0; i < data.n; ++i) {
        sums.row(labels[i]) += features.row(i);
        counts[labels[i]] += 1.0;
      }
      for (int c = 0; c < K; ++c) {
        if (counts[c] > 0.0) centers.row(c) = sums.row(c) / counts[c];
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }

  // Order clusters by mean time index so component numbering is stable.
  std::vector<double> mean_step(K, 0.0);
  std::vector<int> count(K, 0);
  for (int i = 0; i < data.n; ++i) {
    mean_step[best_labels[i]] += data.step_of[i];
    ++count[best_labels[i]];
  }
  std::vector<int> order(K);
  for (int c = 0; c < K; ++c) {
    order[c] = c;
    if (count[c] > 0) mean_step[c] /= count[c];
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mean_step[a] < mean_step[b]; });
  std::vector<int> rank(K);
  for (int r = 0; r < K; ++r) rank[order[r]] = r;

  Matrix resp = Matrix::Zero(data.n, K);
  for (int i = 0; i < data.n; ++i) resp(i, rank[best_labels[i]]) = 1.0;
  return resp;
}

// Hands the worst-explained sample to an empty component so it can restart.
void reseed(Matrix& resp, const Matrix& log_terms, int k) {
  int worst = 0;
  double worst_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < log_terms.rows(); ++i) {
    const double v = log_terms.row(i).maxCoeff();
    if (v < worst_value) {
      worst_value = v;
      worst = i;
    }
  }
  resp.row(worst).setZero();
  resp(worst, k) = 1.0;
}

}  // namespace

void Demonstration::validate(const Manifold& m) const {
  if (trajectory.size() < 2) {
    throw ValidationError("demonstration '" + id + "' needs at least 2 samples");
  }
  if (!(sample_rate > 0.0)) {
    throw ValidationError("demonstration '" + id + "' has a non-positive sample rate");
  }
  for (const auto& x : trajectory) m.check_point(x, ("sample of demonstration '" + id + "'").c_str());
  for (const auto& f : frames) f.validate(m);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t j = i + 1; j < frames.size(); ++j) {
      if (frames[i].id() == frames[j].id()) {
        throw ValidationError("demonstration '" + id + "' repeats frame id '" + frames[i].id() + "'");
      }
    }
  }
}

int TPGMM::frame_index(const std::string& id) const {
  for (int p = 0; p < frame_count(); ++p) {
    if (frames[p].id == id) return p;
  }
  return -1;
}

void TPGMM::validate() const {
  const int K = size();
  if (K < 1) throw ValidationError("TP-GMM has no components");
  if (priors.size() != K) throw ValidationError("TP-GMM priors do not match component count");
  if ((priors.array() < 0.0).any() || std::abs(priors.sum() - 1.0) > 1e-9) {
    throw ValidationError("TP-GMM priors are not a probability vector");
  }
  for (int p = 0; p < frame_count(); ++p) {
    for (int q = p + 1; q < frame_count(); ++q) {
      if (frames[p].id == frames[q].id) {
        throw ValidationError("TP-GMM repeats frame id '" + frames[p].id + "'");
      }
    }
  }
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(components[k].size()) != frame_count()) {
      throw ValidationError("component " + std::to_string(k) + " does not list every frame");
    }
    bool any = false;
    for (int p = 0; p < frame_count(); ++p) {
      const auto& g = components[k][p];
      if (!g) continue;
      any = true;
      const std::string what = "component " + std::to_string(k) + " frame '" + frames[p].id + "'";
      manifold.check_point(g->mean, what.c_str());
      if (g->covariance.rows() != manifold.tangent_dim()) {
        throw ValidationError(what + ": covariance has wrong size");
      }
      check_spd(g->covariance, what.c_str());
    }
    if (!any) throw ValidationError("component " + std::to_string(k) + " has no frame");
  }
}

std::vector<Point> to_frame(const Manifold& m, std::span<const Point> trajectory,
                            const Frame& frame) {
  std::vector<Point> out;
  out.reserve(trajectory.size());
  for (const auto& x : trajectory) out.push_back(frame.to_local(m, x));
  return out;
}

std::vector<Point> from_frame(const Manifold& m, std::span<const Point> trajectory,
                              const Frame& frame) {
  std::vector<Point> out;
  out.reserve(trajectory.size());
  for (const auto& x : trajectory) out.push_back(frame.to_global(m, x));
  return out;
}

namespace {

EmResult em_single(const Manifold& m, std::span<const Demonstration> demos,
                   const std::vector<FrameSlot>& slots, int K, const EmOptions& options,
                   int kmeans_restarts) {
  if (demos.empty()) throw ValidationError("EM: no demonstrations");
  if (K < 1) throw ValidationError("EM: K must be at least 1");
  if (slots.empty()) throw ValidationError("EM: at least one frame is required");
  for (const auto& demo : demos) demo.validate(m);

  const int P = static_cast<int>(slots.size());
  const LocalData data = build_local_data(m, demos, P);
  if (K > data.n) {
    throw ValidationError("EM: K = " + std::to_string(K) + " exceeds the " +
                          std::to_string(data.n) + " available samples");
  }

  EmResult result;
  TPGMM& model = result.model;
  model.manifold = m;
  model.frames = slots;
  model.components.assign(K, std::vector<std::optional<RiemannianGaussian>>(P));

  Matrix resp = options.init == EmInit::KMeans
                    ? kmeans(m, data, K, options.seed, kmeans_restarts)
                    : time_binning(demos, data, K);
  std::vector<int> reseeded(K, 0);
  auto handle_empty = [&](const Matrix& log_terms) {
    const Vector mass = resp.colwise().sum().transpose();
    for (int k = 0; k < K; ++k) {
      if (mass[k] >= kEmptyMass) continue;
      if (reseeded[k]++ > 0) {
        throw NumericalError("EM: component " + std::to_string(k) +
                             " emptied again after re-seeding; K is too large for the data");
      }
      reseed(resp, log_terms, k);
      ++result.reseeds;
    }
  };

  handle_empty(Matrix::Zero(data.n, K));
  m_step(model, data, resp, 0, options);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Matrix log_terms = joint_log_terms(model, data.per_frame, data.n);
    const double ll = e_step(log_terms, resp);
    result.log_likelihood.push_back(ll);
    result.iterations = iter + 1;
    if (iter > 0 && ll - result.log_likelihood[iter - 1] < options.tolerance) {
      result.converged = true;
      break;
    }
    handle_empty(log_terms);
    m_step(model, data, resp, iter + 1, options);
  }
  model.priors /= model.priors.sum();
  return result;
}

}  // namespace

EmResult em_fit(const Manifold& m, std::span<const Demonstration> demos,
                const std::vector<FrameSlot>& slots, int K, const EmOptions& options) {
  if (options.restarts < 1) throw ValidationError("EM: restarts must be at least 1");
  if (options.init != EmInit::KMeans || options.restarts == 1) {
    return em_single(m, demos, slots, K, options, 10);
  }
  // Independent single k-means++ seedings, each refined by EM; the best final fit wins.
  std::optional<EmResult> best;
  for (int r = 0; r < options.restarts; ++r) {
    EmOptions o = options;
    o.seed = options.seed + static_cast<std::uint64_t>(r);
    EmResult fit = em_single(m, demos, slots, K, o, 1);
    if (!best || fit.log_likelihood.back() > best->log_likelihood.back()) best = std::move(fit);
  }
  return std::move(*best);
}

double log_likelihood(const TPGMM& model, std::span<const Demonstration> demos) {
  const LocalData data = build_local_data(model.manifold, demos, model.frame_count());
  Matrix resp;
  return e_step(joint_log_terms(model, data.per_frame, data.n), resp);
}

double bic(const TPGMM& model, std::span<const Demonstration> demos) {
  const int d = model.manifold.tangent_dim();
  double params = model.size() - 1;
  for (const auto& row : model.components) {
    for (const auto& g : row) {
      if (g) params += d + 0.5 * d * (d + 1);
    }
  }
  std::size_t n = 0;
  for (const auto& demo : demos) n += demo.trajectory.size();
  return -2.0 * log_likelihood(model, demos) + params * std::log(static_cast<double>(n));
}

RiemannianGaussian global_component(const TPGMM& model, std::span<const Frame> frames, int k) {
  if (static_cast<int>(frames.size()) != model.frame_count()) {
    throw ValidationError("expected " + std::to_string(model.frame_count()) +
                          " frames, got " + std::to_string(frames.size()));
  }
  if (k < 0 || k >= model.size()) {
    throw ValidationError("component " + std::to_string(k) + " out of range");
  }
  std::vector<RiemannianGaussian> factors;
  for (int p = 0; p < model.frame_count(); ++p) {
    const auto& g = model.components[k][p];
    if (g) factors.push_back(frames[p].to_global(model.manifold, *g));
  }
  if (factors.empty()) {
    throw ValidationError("component " + std::to_string(k) + " has no frame");
  }
  return gaussian_product(model.manifold, factors);
}

GlobalGMM global_gmm(const TPGMM& model, std::span<const Frame> frames) {
  GlobalGMM out;
  out.manifold = model.manifold;
  out.priors = model.priors;
  out.components.reserve(model.size());
  for (int k = 0; k < model.size(); ++k) {
    out.components.push_back(global_component(model, frames, k));
  }
  return out;
}

Matrix responsibilities(const TPGMM& model, const Demonstration& demo) {
  const LocalData data =
      build_local_data(model.manifold, std::span<const Demonstration>(&demo, 1), model.frame_count());
  Matrix resp;
  e_step(joint_log_terms(model, data.per_frame, data.n), resp);
  return resp;
}

std::vector<int> state_labels(const TPGMM& model, const Demonstration& demo) {
  const Matrix resp = responsibilities(model, demo);
  std::vector<int> labels(resp.rows());
  for (int i = 0; i < resp.rows(); ++i) {
    int arg = 0;
    for (int k = 1; k < resp.cols(); ++k) {
      if (resp(i, k) > resp(i, arg)) arg = k;
    }
    labels[i] = arg;
  }
  return labels;
}

}  // namespace skillseq
