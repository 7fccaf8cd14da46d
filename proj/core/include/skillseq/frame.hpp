#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "skillseq/manifold.hpp"

namespace skillseq {

/// Name of the world frame; always part of every frame set.
inline const std::string kGlobalFrame = "global";
/// Name under which the end-effector appears among "objects".
inline const std::string kEndEffector = "ee";

/// Rigid transform in 3-D. Planar manifolds use the xy part and the yaw.
struct Pose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  static Pose identity() { return {}; }
  /// this * rhs, i.e. rhs expressed in this frame mapped to the parent frame.
  Pose operator*(const Pose& rhs) const;
  Pose inverse() const;
};

/// Reads the pose stored in a point: first Euclidean block of size 2 or 3 is
/// the position, first quaternion block the orientation. Missing parts are identity.
Pose pose_of(const Manifold& m, const Point& x);

/// Overwrites the position/orientation blocks of `base` with `pose`.
Point with_pose(const Manifold& m, const Point& base, const Pose& pose);

/// Task parameters (A, b) of one coordinate frame.
///
/// `linear` is a block-diagonal tangent-space map: orthonormal on Euclidean
/// blocks and identity on quaternion blocks. `origin` is a point whose
/// Euclidean blocks translate and whose quaternion blocks pre-multiply.
/// Mapping into the frame is x_local = A^-1 (x - b) on Euclidean blocks and
/// q_local = b_q^-1 * q on quaternion blocks.
class Frame {
 public:
  Frame() = default;
  Frame(Matrix linear, Point origin, std::string id = kGlobalFrame,
        std::string object = kGlobalFrame);

  static Frame identity(const Manifold& m, std::string id = kGlobalFrame,
                        std::string object = kGlobalFrame);
  /// Frame attached to a rigid pose: rotates and translates the position
  /// block, pre-multiplies quaternion blocks, leaves other blocks alone.
  static Frame from_pose(const Manifold& m, const Pose& pose, std::string id = kGlobalFrame,
                         std::string object = kGlobalFrame);

  const Matrix& linear() const { return linear_; }
  const Point& origin() const { return origin_; }
  const std::string& id() const { return id_; }
  const std::string& object() const { return object_; }

  /// Throws ValidationError if the frame does not fit m or A is not block orthonormal.
  void validate(const Manifold& m) const;

  Point to_local(const Manifold& m, const Point& x) const;
  Point to_global(const Manifold& m, const Point& x) const;
  RiemannianGaussian to_local(const Manifold& m, const RiemannianGaussian& g) const;
  RiemannianGaussian to_global(const Manifold& m, const RiemannianGaussian& g) const;

  /// outer o inner: maps inner-local coordinates through inner and then outer.
  static Frame compose(const Manifold& m, const Frame& outer, const Frame& inner);
  Frame inverse(const Manifold& m) const;

 private:
  Matrix linear_;
  Point origin_;
  std::string id_ = kGlobalFrame;
  std::string object_ = kGlobalFrame;
};

/// The two manifolds of a workspace: robot (end-effector) and rigid objects.
struct StateSpace {
  Manifold robot = Manifold::pose_with_gripper();
  Manifold object = Manifold::pose();

  const Manifold& manifold_of(const std::string& entity) const {
    return entity == kEndEffector ? robot : object;
  }
  bool operator==(const StateSpace&) const = default;
};

/// End-effector state plus the pose of every object.
struct SystemState {
  Point end_effector;
  std::map<std::string, Point> objects;
  double timestamp = 0.0;

  /// Point of an entity ("ee" or an object id).
  const Point& entity(const std::string& name) const;
};

/// Pose of a frame base: identity for "global", else the entity's pose.
Pose base_pose(const StateSpace& space, const SystemState& state, const std::string& base);

/// A frame binding stored with a model: a base entity observed at run time,
/// composed with a fixed relative pose learned or predicted offline.
struct FrameSlot {
  std::string id;
  std::string base = kGlobalFrame;
  Pose relative;

  static FrameSlot attached(const std::string& entity) { return {entity, entity, Pose{}}; }

  Frame instantiate(const Manifold& m, const StateSpace& space,
                    const SystemState& state) const;
};

std::vector<Frame> instantiate_frames(const Manifold& m, const StateSpace& space,
                                      const std::vector<FrameSlot>& slots,
                                      const SystemState& state);

}  // namespace skillseq
