#pragma once
/**
 * Riemannian primitives on product manifolds built from Euclidean blocks and
 * unit-quaternion (S^3) blocks, e.g. R^3 x S^3 x R^1 for an end-effector pose
 * plus gripper opening.
 *
 * Conventions:
 *   - Points are ambient coordinate vectors. Quaternion blocks are stored as
 *     [w, x, y, z] and kept canonical: unit norm, w >= 0 and, if w == 0, the
 *     first nonzero vector component positive.
 *   - Quaternion tangent coordinates are body-frame rotation vectors:
 *       Exp_q(r) = q * exp(r / 2),   Log_q(p) = 2 log(q^-1 p)
 *     so the geodesic distance between two orientations is the rotation angle.
 *   - Parallel transport along the geodesic q -> p rotates a quaternion
 *     tangent by -Log_q(p) / 2; Euclidean tangents are left unchanged.
 */

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace skillseq {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point on a product manifold, in ambient coordinates.
using Point = Eigen::VectorXd;
/// A tangent vector, in tangent coordinates of some base point.
using Tangent = Eigen::VectorXd;

/// Diagonal floor added to covariances with an eigenvalue below it.
inline constexpr double kCovarianceFloor = 1e-8;
/// Norm tolerance for unit quaternions.
inline constexpr double kUnitTolerance = 1e-9;

enum class BlockKind { Euclidean, UnitQuaternion };

struct Block {
  BlockKind kind = BlockKind::Euclidean;
  int size = 1;  // Euclidean dimension; ignored for quaternions

  static Block euclidean(int n) { return {BlockKind::Euclidean, n}; }
  static Block quaternion() { return {BlockKind::UnitQuaternion, 3}; }

  int ambient_dim() const { return kind == BlockKind::UnitQuaternion ? 4 : size; }
  int tangent_dim() const { return kind == BlockKind::UnitQuaternion ? 3 : size; }

  bool operator==(const Block&) const = default;
};

/// Product manifold descriptor. Immutable after construction; all operations
/// are pure and safe to call concurrently.
class Manifold {
 public:
  Manifold() = default;
  explicit Manifold(std::vector<Block> blocks);

  static Manifold euclidean(int n);
  /// R^3 x S^3, the pose of a rigid object.
  static Manifold pose();
  /// R^3 x S^3 x R^1, end-effector pose plus gripper channel.
  static Manifold pose_with_gripper();
  /// Parses the compact form produced by name(), e.g. "R3xS3xR1".
  static Manifold parse(const std::string& name);

  const std::vector<Block>& blocks() const { return blocks_; }
  int ambient_dim() const { return ambient_dim_; }
  int tangent_dim() const { return tangent_dim_; }
  int ambient_offset(std::size_t block) const { return ambient_offsets_[block]; }
  int tangent_offset(std::size_t block) const { return tangent_offsets_[block]; }
  bool has_quaternions() const { return has_quaternions_; }
  std::string name() const;

  bool operator==(const Manifold& other) const { return blocks_ == other.blocks_; }

  /// Identity element: zero Euclidean coordinates and identity quaternions.
  Point identity() const;
  /// Normalizes and sign-canonicalizes quaternion blocks.
  Point canonicalize(const Point& x) const;
  /// True if x has the right size, is finite, and its quaternions are unit and canonical.
  bool contains(const Point& x, double tol = kUnitTolerance) const;
  /// Throws ValidationError unless contains(x).
  void check_point(const Point& x, const char* what) const;

  Point exp(const Point& base, const Tangent& v) const;
  Tangent log(const Point& base, const Point& y) const;
  double distance(const Point& a, const Point& b) const { return log(a, b).norm(); }

  /// Matrix of the parallel transport T_from -> T_to (orthogonal, block-diagonal).
  Matrix transport_matrix(const Point& from, const Point& to) const;
  Tangent transport(const Point& from, const Point& to, const Tangent& v) const;
  /// T Sigma T^T with T = transport_matrix(from, to).
  Matrix transport_covariance(const Point& from, const Point& to,
                              const Matrix& covariance) const;

 private:
  std::vector<Block> blocks_;
  std::vector<int> ambient_offsets_;
  std::vector<int> tangent_offsets_;
  int ambient_dim_ = 0;
  int tangent_dim_ = 0;
  bool has_quaternions_ = false;
};

namespace quat {

/// [w, x, y, z] <-> Eigen quaternion.
Eigen::Quaterniond from_coeffs(const Eigen::Ref<const Eigen::Vector4d>& wxyz);
Eigen::Vector4d to_coeffs(const Eigen::Quaterniond& q);
/// Unit norm, w >= 0, and first nonzero vector component positive when w == 0.
Eigen::Quaterniond canonical(const Eigen::Quaterniond& q);
/// Rotation-vector exponential (angle = |r|).
Eigen::Quaterniond exp(const Eigen::Vector3d& rotation_vector);
/// Rotation-vector logarithm with angle in [0, pi]; cut-locus axis canonicalized.
Eigen::Vector3d log(const Eigen::Quaterniond& q);

}  // namespace quat

/// Gaussian on a manifold: mean point plus covariance in the tangent space at the mean.
struct RiemannianGaussian {
  Point mean;
  Matrix covariance;
};

/// Symmetrizes and adds kCovarianceFloor to the diagonal if the smallest
/// eigenvalue is below the floor.
Matrix regularize_covariance(const Matrix& covariance);

/// Throws NumericalError if the covariance is not symmetric positive-definite.
void check_spd(const Matrix& covariance, const char* what);

/// -1/2 Log_mu(x)^T Sigma^-1 Log_mu(x) - 1/2 log((2 pi)^d |Sigma|).
double gaussian_log_pdf(const Manifold& m, const RiemannianGaussian& g, const Point& x);

/// gaussian_log_pdf with the Cholesky factor and normalizer computed once.
class GaussianDensity {
 public:
  GaussianDensity(const Manifold& m, const RiemannianGaussian& g);
  double log_pdf(const Point& x) const;
  const RiemannianGaussian& gaussian() const { return g_; }

 private:
  Manifold m_;
  RiemannianGaussian g_;
  Matrix lower_;
  double log_norm_;
};

/// Fused Gaussian of a product of Gaussians. Euclidean manifolds use the closed
/// form directly; with quaternion blocks the fused mean is the fixed point of
/// transporting every factor into the tangent space of the current estimate.
RiemannianGaussian gaussian_product(const Manifold& m,
                                    std::span<const RiemannianGaussian> factors);

struct FixedPointOptions {
  double tolerance = 1e-9;
  int max_iterations = 100;
};

/// Weighted Frechet (Karcher) mean.
Point weighted_karcher_mean(const Manifold& m, std::span<const Point> points,
                            std::span<const double> weights,
                            const FixedPointOptions& options = {});

/// Weighted Karcher mean plus weighted tangent scatter at that mean, regularized.
RiemannianGaussian fit_gaussian(const Manifold& m, std::span<const Point> points,
                                std::span<const double> weights);

}  // namespace skillseq
