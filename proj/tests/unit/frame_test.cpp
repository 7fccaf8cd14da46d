#include <gtest/gtest.h>

#include "oracles/fixtures.hpp"
#include "skillseq/error.hpp"
#include "skillseq/frame.hpp"
#include "skillseq/tpgmm.hpp"

namespace skillseq {
namespace {

using testing::random_point;
using testing::random_pose;
using testing::random_spd;
using testing::Rng;

TEST(Pose, CompositionAndInverse) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pose id = a * a.inverse();
    EXPECT_LT(id.position.norm(), 1e-12);
    EXPECT_NEAR(std::abs(id.orientation.w()), 1.0, 1e-12);
    const Eigen::Vector3d p(0.3, -0.2, 0.5);
    EXPECT_LT(((a * b).orientation * p + (a * b).position -
               (a.orientation * (b.orientation * p + b.position) + a.position))
                  .norm(),
              1e-12);
  }
}

TEST(Pose, PointRoundTrip) {
  Rng rng(2);
  const Manifold m = Manifold::pose_with_gripper();
  const Point x = random_point(m, rng);
  const Pose p = pose_of(m, x);
  const Point y = with_pose(m, m.identity(), p);
  EXPECT_LT((y.head<7>() - x.head<7>()).norm(), 1e-12);
  EXPECT_EQ(y[7], 0.0);
}

TEST(Frame, IdentityLeavesPointsAlone) {
  Rng rng(3);
  const Manifold m = Manifold::pose_with_gripper();
  const Frame f = Frame::identity(m);
  const Point x = random_point(m, rng);
  EXPECT_LT((f.to_local(m, x) - x).norm(), 1e-15);
  EXPECT_LT((f.to_global(m, x) - x).norm(), 1e-15);
}

TEST(Frame, TranslationOnlyShiftsPosition) {
  const Manifold m = Manifold::pose_with_gripper();
  Pose shift;
  shift.position = Eigen::Vector3d(1.0, 2.0, 3.0);
  const Frame f = Frame::from_pose(m, shift);
  Point x = m.identity();
  x[7] = 0.4;
  const Point local = f.to_local(m, x);
  EXPECT_TRUE(local.head<3>().isApprox(Eigen::Vector3d(-1.0, -2.0, -3.0)));
  EXPECT_EQ(local[7], 0.4);
}

TEST(FrameProperty, ToFrameFromFrameRoundTrip) {
  Rng rng(4);
  const Manifold m = Manifold::pose_with_gripper();
  for (int i = 0; i < 200; ++i) {
    const Frame f = Frame::from_pose(m, random_pose(rng, 2.0));
    std::vector<Point> traj;
    for (int t = 0; t < 10; ++t) traj.push_back(random_point(m, rng));
    const auto back = from_frame(m, to_frame(m, traj, f), f);
    for (int t = 0; t < 10; ++t) EXPECT_LT(m.distance(back[t], traj[t]), 1e-12);
  }
}

TEST(FrameProperty, GaussianMappingPreservesDensity) {
  Rng rng(5);
  const Manifold m = Manifold::pose_with_gripper();
  for (int i = 0; i < 100; ++i) {
    const Frame f = Frame::from_pose(m, random_pose(rng, 2.0));
    const RiemannianGaussian local{random_point(m, rng), random_spd(7, rng)};
    const RiemannianGaussian world = f.to_global(m, local);
    const Point x = random_point(m, rng);
    EXPECT_NEAR(gaussian_log_pdf(m, world, f.to_global(m, x)), gaussian_log_pdf(m, local, x),
                1e-8);
    const RiemannianGaussian again = f.to_local(m, world);
    EXPECT_LT(m.distance(again.mean, local.mean), 1e-12);
    EXPECT_LT((again.covariance - local.covariance).norm(), 1e-10);
  }
}

TEST(FrameProperty, ComposeAndInverse) {
  Rng rng(6);
  const Manifold m = Manifold::pose_with_gripper();
  for (int i = 0; i < 100; ++i) {
    const Frame a = Frame::from_pose(m, random_pose(rng));
    const Frame b = Frame::from_pose(m, random_pose(rng));
    const Point x = random_point(m, rng);
    const Frame ab = Frame::compose(m, a, b);
    EXPECT_LT(m.distance(ab.to_global(m, x), a.to_global(m, b.to_global(m, x))), 1e-12);
    EXPECT_LT(m.distance(a.inverse(m).to_global(m, x), a.to_local(m, x)), 1e-12);
  }
}

TEST(Frame, ValidateRejectsNonOrthonormal) {
  const Manifold m = Manifold::pose_with_gripper();
  Matrix a = Matrix::Identity(7, 7);
  a(0, 0) = 2.0;
  EXPECT_THROW(Frame(a, m.identity()).validate(m), ValidationError);
  EXPECT_THROW(Frame::identity(Manifold::euclidean(2)).validate(m), ValidationError);
  EXPECT_NO_THROW(Frame::identity(m).validate(m));
}

TEST(FrameSlot, InstantiatesFromEntityPose) {
  Rng rng(7);
  const StateSpace space;
  SystemState state;
  state.end_effector = random_point(space.robot, rng);
  state.objects["box"] = random_point(space.object, rng);
  FrameSlot slot{"box_offset", "box", random_pose(rng)};
  const Frame f = slot.instantiate(space.robot, space, state);
  const Pose expected = pose_of(space.object, state.objects["box"]) * slot.relative;
  const Frame g = Frame::from_pose(space.robot, expected);
  EXPECT_LT((f.origin() - g.origin()).norm(), 1e-12);
  EXPECT_LT((f.linear() - g.linear()).norm(), 1e-12);
  EXPECT_EQ(base_pose(space, state, kGlobalFrame).position, Eigen::Vector3d::Zero());
  EXPECT_THROW(state.entity("missing"), ValidationError);
}

}  // namespace
}  // namespace skillseq
