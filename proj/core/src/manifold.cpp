#include "skillseq/manifold.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "skillseq/error.hpp"

namespace skillseq {

namespace quat {

Eigen::Quaterniond from_coeffs(const Eigen::Ref<const Eigen::Vector4d>& wxyz) {
  return Eigen::Quaterniond(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
}

Eigen::Vector4d to_coeffs(const Eigen::Quaterniond& q) {
  return {q.w(), q.x(), q.y(), q.z()};
}

Eigen::Quaterniond canonical(const Eigen::Quaterniond& q) {
  Eigen::Quaterniond out = q.normalized();
  bool flip = out.w() < 0.0;
  if (out.w() == 0.0) {
    for (double c : {out.x(), out.y(), out.z()}) {
      if (c != 0.0) {
        flip = c < 0.0;
        break;
      }
    }
  }
  if (flip) out.coeffs() = -out.coeffs();
  return out;
}

Eigen::Quaterniond exp(const Eigen::Vector3d& r) {
  const double angle = r.norm();
  // sin(angle / 2) / angle, with its Taylor expansion near zero
  const double k = angle < 1e-8 ? 0.5 - angle * angle / 48.0
                                 : std::sin(0.5 * angle) / angle;
  Eigen::Quaterniond q(std::cos(0.5 * angle), k * r.x(), k * r.y(), k * r.z());
  return q.normalized();
}

Eigen::Vector3d log(const Eigen::Quaterniond& q_in) {
  const Eigen::Quaterniond q = canonical(q_in);
  const Eigen::Vector3d v = q.vec();
  const double s = v.norm();
  const double w = q.w();
  if (s == 0.0) return Eigen::Vector3d::Zero();
  if (s < 1e-8) {
    return (2.0 / w) * (1.0 - s * s / (3.0 * w * w)) * v;
  }
  const double angle = 2.0 * std::atan2(s, std::abs(w));
  Eigen::Vector3d axis = v / s;
  if (std::abs(w) < kUnitTolerance) {
    // cut locus: both axis signs give the same rotation, pick the canonical one
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0.0) axis = -axis;
        break;
      }
    }
  }
  return angle * axis;
}

}  // namespace quat

Manifold::Manifold(std::vector<Block> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ValidationError("manifold needs at least one block");
  for (const Block& b : blocks_) {
    if (b.kind == BlockKind::Euclidean && b.size < 1) {
      throw ValidationError("Euclidean block dimension must be positive");
    }
    ambient_offsets_.push_back(ambient_dim_);
    tangent_offsets_.push_back(tangent_dim_);
    ambient_dim_ += b.ambient_dim();
    tangent_dim_ += b.tangent_dim();
    has_quaternions_ = has_quaternions_ || b.kind == BlockKind::UnitQuaternion;
  }
}

Manifold Manifold::euclidean(int n) { return Manifold({Block::euclidean(n)}); }

Manifold Manifold::pose() {
  return Manifold({Block::euclidean(3), Block::quaternion()});
}

Manifold Manifold::pose_with_gripper() {
  return Manifold({Block::euclidean(3), Block::quaternion(), Block::euclidean(1)});
}

Manifold Manifold::parse(const std::string& name) {
  std::vector<Block> blocks;
  std::stringstream ss(name);
  std::string token;
  while (std::getline(ss, token, 'x')) {
    if (token == "S3") {
      blocks.push_back(Block::quaternion());
    } else if (token.size() > 1 && token[0] == 'R') {
      int n = 0;
      try {
        n = std::stoi(token.substr(1));
      } catch (const std::exception&) {
        throw ValidationError("bad manifold block '" + token + "' in '" + name + "'");
      }
      blocks.push_back(Block::euclidean(n));
    } else {
      throw ValidationError("bad manifold block '" + token + "' in '" + name + "'");
    }
  }
  return Manifold(std::move(blocks));
}

std::string Manifold::name() const {
  std::string out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (i) out += 'x';
    out += blocks_[i].kind == BlockKind::UnitQuaternion
               ? std::string("S3")
               : "R" + std::to_string(blocks_[i].size);
  }
  return out;
}

Point Manifold::identity() const {
  Point x = Point::Zero(ambient_dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].kind == BlockKind::UnitQuaternion) x[ambient_offsets_[i]] = 1.0;
  }
  return x;
}

Point Manifold::canonicalize(const Point& x) const {
  if (x.size() != ambient_dim_) {
    throw ValidationError("point has " + std::to_string(x.size()) +
                          " coordinates, manifold " + name() + " needs " +
                          std::to_string(ambient_dim_));
  }
  Point out = x;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].kind != BlockKind::UnitQuaternion) continue;
    const int o = ambient_offsets_[i];
    const Eigen::Vector4d q = out.segment<4>(o);
    if (q.norm() == 0.0) throw ValidationError("zero quaternion in point");
    out.segment<4>(o) = quat::to_coeffs(quat::canonical(quat::from_coeffs(q)));
  }
  return out;
}

bool Manifold::contains(const Point& x, double tol) const {
  if (x.size() != ambient_dim_ || !x.allFinite()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].kind != BlockKind::UnitQuaternion) continue;
    const Eigen::Vector4d q = x.segment<4>(ambient_offsets_[i]);
    if (std::abs(q.norm() - 1.0) > tol || q[0] < -tol) return false;
  }
  return true;
}

void Manifold::check_point(const Point& x, const char* what) const {
  if (!contains(x)) {
    throw ValidationError(std::string(what) + " is not a canonical point of " + name());
  }
}

Point Manifold::exp(const Point& base, const Tangent& v) const {
  if (base.size() != ambient_dim_ || v.size() != tangent_dim_) {
    throw ValidationError("exp: dimension mismatch on " + name());
  }
  Point out(ambient_dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const int a = ambient_offsets_[i];
    const int t = tangent_offsets_[i];
    if (blocks_[i].kind == BlockKind::Euclidean) {
      const int n = blocks_[i].size;
      out.segment(a, n) = base.segment(a, n) + v.segment(t, n);
    } else {
      const Eigen::Quaterniond q = quat::from_coeffs(base.segment<4>(a));
      out.segment<4>(a) =
          quat::to_coeffs(quat::canonical(q * quat::exp(v.segment<3>(t))));
    }
  }
  return out;
}

Tangent Manifold::log(const Point& base, const Point& y) const {
  if (base.size() != ambient_dim_ || y.size() != ambient_dim_) {
    throw ValidationError("log: dimension mismatch on " + name());
  }
  Tangent out(tangent_dim_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const int a = ambient_offsets_[i];
    const int t = tangent_offsets_[i];
    if (blocks_[i].kind == BlockKind::Euclidean) {
      const int n = blocks_[i].size;
      out.segment(t, n) = y.segment(a, n) - base.segment(a, n);
    } else {
      const Eigen::Quaterniond q = quat::from_coeffs(base.segment<4>(a));
      const Eigen::Quaterniond p = quat::from_coeffs(y.segment<4>(a));
      out.segment<3>(t) = quat::log(q.conjugate() * p);
    }
  }
  return out;
}

Matrix Manifold::transport_matrix(const Point& from, const Point& to) const {
  Matrix T = Matrix::Identity(tangent_dim_, tangent_dim_);
  if (!has_quaternions_) return T;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].kind != BlockKind::UnitQuaternion) continue;
    const int a = ambient_offsets_[i];
    const int t = tangent_offsets_[i];
    const Eigen::Quaterniond q = quat::from_coeffs(from.segment<4>(a));
    const Eigen::Quaterniond p = quat::from_coeffs(to.segment<4>(a));
    const Eigen::Vector3d r = quat::log(q.conjugate() * p);
    T.block<3, 3>(t, t) = quat::exp(-0.5 * r).toRotationMatrix();
  }
  return T;
}

Tangent Manifold::transport(const Point& from, const Point& to, const Tangent& v) const {
  if (!has_quaternions_) return v;
  return transport_matrix(from, to) * v;
}

Matrix Manifold::transport_covariance(const Point& from, const Point& to,
                                      const Matrix& covariance) const {
  if (!has_quaternions_) return covariance;
  const Matrix T = transport_matrix(from, to);
  Matrix out = T * covariance * T.transpose();
  return 0.5 * (out + out.transpose());
}

Matrix regularize_covariance(const Matrix& covariance) {
  Matrix s = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < kCovarianceFloor) {
    s.diagonal().array() += kCovarianceFloor;
  }
  return s;
}

void check_spd(const Matrix& covariance, const char* what) {
  if (covariance.rows() != covariance.cols() || !covariance.allFinite()) {
    throw NumericalError(std::string(what) + ": covariance is not a finite square matrix");
  }
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw NumericalError(std::string(what) + ": covariance is not symmetric");
  }
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + ": covariance is not positive-definite");
  }
}

double gaussian_log_pdf(const Manifold& m, const RiemannianGaussian& g, const Point& x) {
  return GaussianDensity(m, g).log_pdf(x);
}

GaussianDensity::GaussianDensity(const Manifold& m, const RiemannianGaussian& g)
    : m_(m), g_(g) {
  const int d = m.tangent_dim();
  if (g.covariance.rows() != d || g.covariance.cols() != d || g.mean.size() != m.ambient_dim()) {
    throw ValidationError("gaussian density: parameters do not match manifold " + m.name());
  }
  Eigen::LLT<Matrix> llt(g.covariance);
  if (llt.info() != Eigen::Success || !g.covariance.allFinite()) {
    throw NumericalError("gaussian density: covariance is not SPD, model is corrupt");
  }
  lower_ = llt.matrixL();
  const double log_det = 2.0 * lower_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianDensity::log_pdf(const Point& x) const {
  const Vector e = m_.log(g_.mean, x);
  const Vector z = lower_.triangularView<Eigen::Lower>().solve(e);
  return -0.5 * z.squaredNorm() + log_norm_;
}

namespace {

Matrix spd_inverse(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("gaussian_product: factor covariance is not SPD");
  }
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace

RiemannianGaussian gaussian_product(const Manifold& m,
                                    std::span<const RiemannianGaussian> factors) {
  if (factors.empty()) throw ValidationError("gaussian_product needs at least one factor");
  const int d = m.tangent_dim();
  for (const auto& f : factors) {
    if (f.mean.size() != m.ambient_dim() || f.covariance.rows() != d ||
        f.covariance.cols() != d) {
      throw ValidationError("gaussian_product: factor does not match manifold " + m.name());
    }
  }
  if (factors.size() == 1) return factors.front();

  if (!m.has_quaternions()) {
    Matrix precision = Matrix::Zero(d, d);
    Vector info = Vector::Zero(d);
    for (const auto& f : factors) {
      const Matrix p = spd_inverse(f.covariance);
      precision += p;
      info += p * f.mean;
    }
    Matrix cov = spd_inverse(precision);
    cov = 0.5 * (cov + cov.transpose());
    Vector mean = cov * info;
    return {std::move(mean), std::move(cov)};
  }

  const FixedPointOptions opts;
  Point mu = factors.front().mean;
  double residual = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Matrix precision = Matrix::Zero(d, d);
    Vector info = Vector::Zero(d);
    for (const auto& f : factors) {
      const Matrix p = spd_inverse(m.transport_covariance(f.mean, mu, f.covariance));
      precision += p;
      info += p * m.log(mu, f.mean);
    }
    Matrix cov = spd_inverse(precision);
    cov = 0.5 * (cov + cov.transpose());
    const Vector step = cov * info;
    mu = m.exp(mu, step);
    residual = step.norm();
    if (residual < opts.tolerance) return {std::move(mu), std::move(cov)};
  }
  throw ConvergenceError("gaussian_product did not converge", mu, residual);
}

Point weighted_karcher_mean(const Manifold& m, std::span<const Point> points,
                            std::span<const double> weights,
                            const FixedPointOptions& options) {
  if (points.empty() || points.size() != weights.size()) {
    throw ValidationError("karcher mean: need one weight per point and at least one point");
  }
  double total = 0.0;
  std::size_t heaviest = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ValidationError("karcher mean: negative weight");
    total += weights[i];
    if (weights[i] > weights[heaviest]) heaviest = i;
  }
  if (!(total > 0.0)) throw ValidationError("karcher mean: weights sum to zero");

  if (!m.has_quaternions()) {
    Vector acc = Vector::Zero(m.ambient_dim());
    for (std::size_t i = 0; i < points.size(); ++i) acc += weights[i] * points[i];
    return acc / total;
  }

  Point mu = points[heaviest];
  double residual = 0.0;
  for (int it = 0; it < options.max_iterations; ++it) {
    Vector step = Vector::Zero(m.tangent_dim());
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (weights[i] > 0.0) step += weights[i] * m.log(mu, points[i]);
    }
    step /= total;
    mu = m.exp(mu, step);
    residual = step.norm();
    if (residual < options.tolerance) return mu;
  }
  throw ConvergenceError("karcher mean did not converge", mu, residual);
}

RiemannianGaussian fit_gaussian(const Manifold& m, std::span<const Point> points,
                                std::span<const double> weights) {
  Point mean = weighted_karcher_mean(m, points, weights);
  const int d = m.tangent_dim();
  Matrix scatter = Matrix::Zero(d, d);
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    const Vector e = m.log(mean, points[i]);
    scatter.noalias() += weights[i] * e * e.transpose();
    total += weights[i];
  }
  return {std::move(mean), regularize_covariance(scatter / total)};
}

}  // namespace skillseq
