#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skillseq/frame.hpp"
#include "skillseq/manifold.hpp"

namespace skillseq {

/// One recorded execution of a skill.
struct Demonstration {
  std::string skill;
  std::string id;
  double sample_rate = 50.0;
  std::vector<Point> trajectory;
  /// Task parameters, static over the demonstration, ordered like the model's frame set.
  std::vector<Frame> frames;
  std::optional<SystemState> initial_state;
  std::optional<SystemState> final_state;
  /// Ground-truth branch label from a generator, empty if unknown.
  std::string branch;

  void validate(const Manifold& m) const;
};

/// Task-parameterized GMM. `components[k][p]` is component k seen from frame p.
///
/// Models fitted by em_fit have an entry for every frame. Composed models may
/// leave entries empty: a component then only contributes through the frames
/// it carries.
struct TPGMM {
  Manifold manifold;
  std::vector<FrameSlot> frames;
  Vector priors;
  std::vector<std::vector<std::optional<RiemannianGaussian>>> components;

  int size() const { return static_cast<int>(components.size()); }
  int frame_count() const { return static_cast<int>(frames.size()); }
  /// Index of the frame slot with this id, or -1.
  int frame_index(const std::string& id) const;
  /// Throws ValidationError on any broken invariant.
  void validate() const;
};

/// Single GMM in world coordinates obtained by fusing every frame of a TPGMM.
struct GlobalGMM {
  Manifold manifold;
  Vector priors;
  std::vector<RiemannianGaussian> components;

  int size() const { return static_cast<int>(components.size()); }
};

std::vector<Point> to_frame(const Manifold& m, std::span<const Point> trajectory,
                            const Frame& frame);
std::vector<Point> from_frame(const Manifold& m, std::span<const Point> trajectory,
                              const Frame& frame);

enum class EmInit { TimeBinning, KMeans };

struct EmOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
  int max_iterations = 200;
  EmInit init = EmInit::TimeBinning;
  /// With k-means initialization: number of independently seeded fits (seeds
  /// seed, seed + 1, ...); the one with the highest final log-likelihood is kept.
  /// A single fit runs k-means++ with ten restarts instead.
  int restarts = 1;
  /// Called before each frame's M-step with the N x K responsibility matrix used.
  std::function<void(int iteration, int frame, const Matrix& responsibilities)> on_m_step;
};

struct EmResult {
  TPGMM model;
  /// Training log-likelihood evaluated at the start of every iteration.
  std::vector<double> log_likelihood;
  int iterations = 0;
  bool converged = false;
  int reseeds = 0;
};

/// Fits a TPGMM with shared responsibilities across frames. The slots describe
/// how each demonstration frame is bound; their count must match every demo.
EmResult em_fit(const Manifold& m, std::span<const Demonstration> demos,
                const std::vector<FrameSlot>& slots, int K, const EmOptions& options = {});

/// Total log-likelihood of the demonstrations under the product-of-frames emission.
double log_likelihood(const TPGMM& model, std::span<const Demonstration> demos);

/// Bayesian information criterion, lower is better.
double bic(const TPGMM& model, std::span<const Demonstration> demos);

/// Component k fused over its frames, each mapped through the matching frame.
RiemannianGaussian global_component(const TPGMM& model, std::span<const Frame> frames, int k);

GlobalGMM global_gmm(const TPGMM& model, std::span<const Frame> frames);

/// Posterior responsibilities (rows sum to 1) of every sample of one demonstration.
Matrix responsibilities(const TPGMM& model, const Demonstration& demo);

/// Max-responsibility component per sample; ties go to the smaller index.
std::vector<int> state_labels(const TPGMM& model, const Demonstration& demo);

}  // namespace skillseq
