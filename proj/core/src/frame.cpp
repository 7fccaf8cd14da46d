#include "skillseq/frame.hpp"

#include <cmath>

#include "skillseq/error.hpp"

namespace skillseq {

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.position = position + orientation * rhs.position;
  out.orientation = quat::canonical(orientation * rhs.orientation);
  return out;
}

Pose Pose::inverse() const {
  Pose out;
  out.orientation = quat::canonical(orientation.conjugate());
  out.position = -(out.orientation * position);
  return out;
}

namespace {

// Index of the first Euclidean block of size 2 or 3, or -1.
int position_block(const Manifold& m) {
  const auto& blocks = m.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].kind == BlockKind::Euclidean && (blocks[i].size == 2 || blocks[i].size == 3)) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

int orientation_block(const Manifold& m) {
  const auto& blocks = m.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].kind == BlockKind::UnitQuaternion) return static_cast<int>(i);
  }
  return -1;
}

Eigen::Matrix2d planar_rotation(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d r = q.toRotationMatrix();
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return Eigen::Rotation2Dd(yaw).toRotationMatrix();
}

}  // namespace

Pose pose_of(const Manifold& m, const Point& x) {
  Pose pose;
  if (const int p = position_block(m); p >= 0) {
    const int n = m.blocks()[p].size;
    pose.position.head(n) = x.segment(m.ambient_offset(p), n);
  }
  if (const int q = orientation_block(m); q >= 0) {
    pose.orientation = quat::from_coeffs(x.segment<4>(m.ambient_offset(q)));
  }
  return pose;
}

Point with_pose(const Manifold& m, const Point& base, const Pose& pose) {
  Point out = base;
  if (const int p = position_block(m); p >= 0) {
    const int n = m.blocks()[p].size;
    out.segment(m.ambient_offset(p), n) = pose.position.head(n);
  }
  if (const int q = orientation_block(m); q >= 0) {
    out.segment<4>(m.ambient_offset(q)) = quat::to_coeffs(quat::canonical(pose.orientation));
  }
  return out;
}

Frame::Frame(Matrix linear, Point origin, std::string id, std::string object)
    : linear_(std::move(linear)),
      origin_(std::move(origin)),
      id_(std::move(id)),
      object_(std::move(object)) {}

Frame Frame::identity(const Manifold& m, std::string id, std::string object) {
  return Frame(Matrix::Identity(m.tangent_dim(), m.tangent_dim()), m.identity(),
               std::move(id), std::move(object));
}

Frame Frame::from_pose(const Manifold& m, const Pose& pose, std::string id,
                       std::string object) {
  Matrix linear = Matrix::Identity(m.tangent_dim(), m.tangent_dim());
  Point origin = m.identity();
  if (const int p = position_block(m); p >= 0) {
    const int n = m.blocks()[p].size;
    const int t = m.tangent_offset(p);
    if (n == 3) {
      linear.block<3, 3>(t, t) = pose.orientation.toRotationMatrix();
    } else {
      linear.block<2, 2>(t, t) = planar_rotation(pose.orientation);
    }
    origin.segment(m.ambient_offset(p), n) = pose.position.head(n);
  }
  if (const int q = orientation_block(m); q >= 0) {
    origin.segment<4>(m.ambient_offset(q)) =
        quat::to_coeffs(quat::canonical(pose.orientation));
  }
  return Frame(std::move(linear), std::move(origin), std::move(id), std::move(object));
}

void Frame::validate(const Manifold& m) const {
  const int d = m.tangent_dim();
  if (linear_.rows() != d || linear_.cols() != d) {
    throw ValidationError("frame '" + id_ + "': rotation must be " + std::to_string(d) +
                          "x" + std::to_string(d));
  }
  m.check_point(origin_, ("origin of frame '" + id_ + "'").c_str());
  const auto& blocks = m.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int t = m.tangent_offset(i);
    const int n = blocks[i].tangent_dim();
    // off-diagonal blocks must vanish
    Matrix rest = linear_.block(t, 0, n, d);
    rest.block(0, t, n, n).setZero();
    if (rest.cwiseAbs().maxCoeff() > 1e-9) {
      throw ValidationError("frame '" + id_ + "': rotation is not block-diagonal");
    }
    const Matrix blk = linear_.block(t, t, n, n);
    const Matrix eye = Matrix::Identity(n, n);
    if (blocks[i].kind == BlockKind::UnitQuaternion) {
      if ((blk - eye).cwiseAbs().maxCoeff() > 1e-9) {
        throw ValidationError("frame '" + id_ +
                              "': quaternion tangent block must be identity");
      }
    } else if ((blk.transpose() * blk - eye).cwiseAbs().maxCoeff() > 1e-9) {
      throw ValidationError("frame '" + id_ + "': rotation block is not orthonormal");
    }
  }
}

Point Frame::to_local(const Manifold& m, const Point& x) const {
  Point out(m.ambient_dim());
  const auto& blocks = m.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int a = m.ambient_offset(i);
    const int t = m.tangent_offset(i);
    if (blocks[i].kind == BlockKind::Euclidean) {
      const int n = blocks[i].size;
      out.segment(a, n) =
          linear_.block(t, t, n, n).transpose() * (x.segment(a, n) - origin_.segment(a, n));
    } else {
      const Eigen::Quaterniond b = quat::from_coeffs(origin_.segment<4>(a));
      const Eigen::Quaterniond q = quat::from_coeffs(x.segment<4>(a));
      out.segment<4>(a) = quat::to_coeffs(quat::canonical(b.conjugate() * q));
    }
  }
  return out;
}

Point Frame::to_global(const Manifold& m, const Point& x) const {
  Point out(m.ambient_dim());
  const auto& blocks = m.blocks();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int a = m.ambient_offset(i);
    const int t = m.tangent_offset(i);
    if (blocks[i].kind == BlockKind::Euclidean) {
      const int n = blocks[i].size;
      out.segment(a, n) = linear_.block(t, t, n, n) * x.segment(a, n) + origin_.segment(a, n);
    } else {
      const Eigen::Quaterniond b = quat::from_coeffs(origin_.segment<4>(a));
      const Eigen::Quaterniond q = quat::from_coeffs(x.segment<4>(a));
      out.segment<4>(a) = quat::to_coeffs(quat::canonical(b * q));
    }
  }
  return out;
}

RiemannianGaussian Frame::to_local(const Manifold& m, const RiemannianGaussian& g) const {
  Matrix cov = linear_.transpose() * g.covariance * linear_;
  return {to_local(m, g.mean), 0.5 * (cov + cov.transpose())};
}

RiemannianGaussian Frame::to_global(const Manifold& m, const RiemannianGaussian& g) const {
  Matrix cov = linear_ * g.covariance * linear_.transpose();
  return {to_global(m, g.mean), 0.5 * (cov + cov.transpose())};
}

Frame Frame::compose(const Manifold& m, const Frame& outer, const Frame& inner) {
  return Frame(outer.linear_ * inner.linear_, outer.to_global(m, inner.origin_), inner.id_,
               inner.object_);
}

Frame Frame::inverse(const Manifold& m) const {
  return Frame(linear_.transpose(), to_local(m, m.identity()), id_, object_);
}

const Point& SystemState::entity(const std::string& name) const {
  if (name == kEndEffector) return end_effector;
  const auto it = objects.find(name);
  if (it == objects.end()) {
    throw ValidationError("system state has no object '" + name + "'");
  }
  return it->second;
}

Pose base_pose(const StateSpace& space, const SystemState& state, const std::string& base) {
  if (base == kGlobalFrame) return Pose::identity();
  return pose_of(space.manifold_of(base), state.entity(base));
}

Frame FrameSlot::instantiate(const Manifold& m, const StateSpace& space,
                             const SystemState& state) const {
  return Frame::from_pose(m, base_pose(space, state, base) * relative, id, base);
}

std::vector<Frame> instantiate_frames(const Manifold& m, const StateSpace& space,
                                      const std::vector<FrameSlot>& slots,
                                      const SystemState& state) {
  std::vector<Frame> frames;
  frames.reserve(slots.size());
  for (const auto& slot : slots) frames.push_back(slot.instantiate(m, space, state));
  return frames;
}

}  // namespace skillseq
