#include <cmath>

#include <gtest/gtest.h>

#include "oracles/fixtures.hpp"
#include "skillseq/error.hpp"
#include "skillseq/serialization.hpp"
#include "skillseq/workspace.hpp"

namespace skillseq {
namespace {

using testing::Rng;

io::Dataset as_dataset(const ScenarioConfig& config, std::vector<Demonstration> demos,
                       const std::string& skill, const std::vector<std::string>& objects) {
  io::Dataset d;
  d.skill = skill;
  d.space = scenario_space(config);
  d.objects = objects;
  d.frames = condition_frames(objects);
  d.demos = std::move(demos);
  return d;
}

Point robot_at(const StateSpace& space, const Eigen::Vector3d& p, double gripper) {
  Pose pose;
  pose.position = p;
  Point x = with_pose(space.robot, space.robot.identity(), pose);
  x[7] = gripper;
  return x;
}

Point object_at(const StateSpace& space, const Eigen::Vector3d& p) {
  Pose pose;
  pose.position = p;
  return with_pose(space.object, space.object.identity(), pose);
}

TEST(BranchingDemos, NoiseFreeSingleBranchIsIdentical) {
  ScenarioConfig c = testing::fig3_config(1);
  c.sample_noise = 0.0;
  c.branches = 1;
  c.layout_spread = 0.0;
  const auto demos = generate_branching_demos(c);
  ASSERT_EQ(demos.size(), 10u);
  for (const auto& d : demos) {
    ASSERT_EQ(d.trajectory.size(), demos[0].trajectory.size());
    for (std::size_t t = 0; t < d.trajectory.size(); ++t) {
      EXPECT_EQ(d.trajectory[t], demos[0].trajectory[t]);
    }
  }
}

TEST(BranchingDemos, DeterministicAndValid) {
  const ScenarioConfig c = testing::fig3_config(5);
  const auto a = generate_branching_demos(c);
  const auto b = generate_branching_demos(c);
  EXPECT_EQ(io::dump(io::to_json(as_dataset(c, a, "pick", {"peg"}))),
            io::dump(io::to_json(as_dataset(c, b, "pick", {"peg"}))));
  for (const auto& d : a) EXPECT_NO_THROW(d.validate(scenario_space(c).robot));
  EXPECT_NO_THROW(as_dataset(c, a, "pick", {"peg"}).validate());
}

TEST(BranchingDemos, NearestCentroidRecoversTheBranch) {
  // Terminal position: mean of the final dwell, expressed in the peg frame.
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ScenarioConfig c = testing::fig3_config(seed);
    c.sample_noise = 0.05;
    c.demos_per_branch = 20;
    const auto demos = generate_branching_demos(c);
    const Manifold m = Manifold::euclidean(2);
    auto terminal = [&](const Demonstration& d) {
      Eigen::Vector2d acc = Eigen::Vector2d::Zero();
      for (int i = 1; i <= 8; ++i) acc += d.frames[1].to_local(m, d.trajectory.end()[-i]);
      return Eigen::Vector2d(acc / 8.0);
    };
    std::map<std::string, Eigen::Vector2d> centroid;
    std::map<std::string, int> count;
    for (const auto& d : demos) {
      centroid.try_emplace(d.branch, Eigen::Vector2d::Zero());
      centroid[d.branch] += terminal(d);
      ++count[d.branch];
    }
    for (auto& [b, v] : centroid) v /= count[b];
    for (const auto& d : demos) {
      const Eigen::Vector2d p = terminal(d);
      std::string best;
      double best_dist = 1e9;
      for (const auto& [b, v] : centroid) {
        if ((p - v).norm() < best_dist) {
          best_dist = (p - v).norm();
          best = b;
        }
      }
      EXPECT_EQ(best, d.branch) << d.id;
    }
  }
}

TEST(BranchingDemos, LearnedModelHasOneStartTwoEnds) {
  const auto fit = testing::learn_fig3(7, 5);
  EXPECT_EQ(fit.model.hsmm.initial_states().size(), 1u);
  EXPECT_EQ(fit.model.hsmm.final_states().size(), 2u);
}

TEST(SkillChain, DeterministicAndConsistent) {
  const ScenarioConfig c = testing::chain_config(4);
  const auto a = generate_skill_chain(c);
  const auto b = generate_skill_chain(c);
  for (int s = 0; s < 2; ++s) {
    EXPECT_EQ(io::dump(io::to_json(as_dataset(c, a.demos[s], a.skill_names[s], a.skill_objects[s]))),
              io::dump(io::to_json(as_dataset(c, b.demos[s], b.skill_names[s], b.skill_objects[s]))));
  }
  const StateSpace space = scenario_space(c);
  ASSERT_EQ(a.demos[0].size(), a.demos[1].size());
  for (std::size_t i = 0; i < a.demos[0].size(); ++i) {
    const auto& first = a.demos[0][i];
    const auto& second = a.demos[1][i];
    EXPECT_NO_THROW(first.validate(space.robot));
    EXPECT_NO_THROW(second.validate(space.robot));
    // Skill-2 frames sit on A's pose after skill 1.
    const Frame expected =
        Frame::from_pose(space.robot, pose_of(space.object, first.final_state->objects.at("A")));
    EXPECT_LT((second.frames[1].origin() - expected.origin()).norm(), 1e-12);
    EXPECT_LT((second.frames[1].linear() - expected.linear()).norm(), 1e-12);
    EXPECT_EQ(second.trajectory.front(), first.trajectory.back());
  }
}

TEST(SkillChain, EffectModelPredictsThePlacedPart) {
  const auto chain = testing::learn_chain(3);
  const SkillModel& pick = chain.skills[0];
  const auto branches = testing::final_branches(pick, chain.data.demos[0]);
  for (int i = 0; i < 20; ++i) {
    const std::string branch = i % 2 ? "left" : "right";
    const auto ep = sample_chain_episode(testing::chain_config(3), 700 + i, branch);
    for (const auto& [k, label] : branches) {
      if (label != branch) continue;
      const SystemState pred = predict_effects(pick.conditions, k, ep.initial);
      const Eigen::Vector3d got = pose_of(pick.space.object, pred.objects.at("A")).position;
      const Eigen::Vector3d want =
          pose_of(pick.space.object, ep.skill_finals[0].objects.at("A")).position;
      EXPECT_LT((got - want).norm(), 0.03) << "episode " << i;
    }
  }
}

TEST(SimulateStep, OpenGripperLeavesObjectsAlone) {
  const StateSpace space;
  SystemState s;
  s.end_effector = robot_at(space, {0, 0, 0}, 0.0);
  s.objects["A"] = object_at(space, {0, 0, 0});
  const SystemState next = simulate_step(space, s, robot_at(space, {0.3, 0, 0}, 0.0));
  EXPECT_EQ(next.objects.at("A"), s.objects.at("A"));
  EXPECT_EQ(next.end_effector, robot_at(space, {0.3, 0, 0}, 0.0));
}

TEST(SimulateStep, AttachedObjectMovesRigidly) {
  Rng rng(1);
  const StateSpace space;
  SystemState s;
  s.end_effector = robot_at(space, {0.1, 0.2, 0.3}, 1.0);
  s.objects["A"] = with_pose(space.object, space.object.identity(),
                             pose_of(space.robot, s.end_effector) *
                                 Pose{Eigen::Vector3d(0.02, -0.01, 0.0),
                                      Eigen::Quaterniond(Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitZ()))});
  s.objects["B"] = object_at(space, {2, 2, 2});
  const Pose rel0 = pose_of(space.robot, s.end_effector).inverse() *
                    pose_of(space.object, s.objects.at("A"));
  for (int t = 0; t < 50; ++t) {
    Point next = s.end_effector;
    next = space.robot.exp(next, testing::random_tangent(7, rng, 0.05));
    next[7] = 1.0;
    s = simulate_step(space, s, next);
    const Pose rel = pose_of(space.robot, s.end_effector).inverse() *
                     pose_of(space.object, s.objects.at("A"));
    EXPECT_LT((rel.position - rel0.position).norm(), 1e-12);
    EXPECT_LT(rel.orientation.angularDistance(rel0.orientation), 1e-12);
    EXPECT_EQ(s.objects.at("B"), object_at(space, {2, 2, 2}));
  }
}

TEST(SimulateStep, GraspRadiusBoundary) {
  const StateSpace space;
  const AttachmentRules rules;
  for (double eps : {1e-9, 1e-6, 1e-3}) {
    SystemState s;
    s.end_effector = robot_at(space, {0, 0, 0}, 1.0);
    s.objects["far"] = object_at(space, {rules.grasp_radius + eps, 0, 0});
    s.objects["near"] = object_at(space, {0, rules.grasp_radius - eps, 0});
    const SystemState next = simulate_step(space, s, robot_at(space, {0, 0, 0.5}, 1.0), rules);
    EXPECT_EQ(next.objects.at("far"), s.objects.at("far"));
    EXPECT_NE(next.objects.at("near"), s.objects.at("near"));
  }
}

TEST(Simulator, PicksUpOnlyWhenClosing) {
  const StateSpace space;
  SystemState s;
  s.end_effector = robot_at(space, {0, 0, 0}, 0.0);
  s.objects["A"] = object_at(space, {0, 0, 0});
  s.objects["B"] = object_at(space, {0.5, 0, 0});
  Simulator sim(space, s);
  sim.step(robot_at(space, {0, 0, 0}, 1.0));
  sim.step(robot_at(space, {0, 0, 0.1}, 1.0));
  EXPECT_EQ(sim.held(), std::set<std::string>{"A"});
  // Carrying A past B does not pick B up.
  for (int i = 1; i <= 10; ++i) sim.step(robot_at(space, {0.05 * i, 0, 0.02}, 1.0));
  EXPECT_EQ(sim.held(), std::set<std::string>{"A"});
  EXPECT_EQ(sim.state().objects.at("B"), object_at(space, {0.5, 0, 0}));
  EXPECT_NEAR(pose_of(space.object, sim.state().objects.at("A")).position.x(), 0.5, 1e-12);
  sim.step(robot_at(space, {0.5, 0, 0.02}, 0.0));
  EXPECT_TRUE(sim.held().empty());
  sim.step(robot_at(space, {0.5, 0, 0.3}, 0.0));
  EXPECT_NEAR(pose_of(space.object, sim.state().objects.at("A")).position.z(), 0.02, 1e-12);
}

TEST(Simulator, GraspNoiseIsSeeded) {
  const StateSpace space;
  SystemState s;
  s.end_effector = robot_at(space, {0, 0, 0}, 0.0);
  s.objects["A"] = object_at(space, {0, 0, 0});
  auto run = [&](std::uint64_t seed) {
    Simulator sim(space, s, {}, 0.01, seed);
    sim.step(robot_at(space, {0, 0, 0}, 1.0));
    sim.step(robot_at(space, {0, 0, 0.2}, 1.0));
    return sim.state().objects.at("A");
  };
  EXPECT_EQ(run(3), run(3));
  EXPECT_NE(run(3), run(4));
}

TEST(Observe, NoiseModel) {
  const StateSpace space;
  SystemState s;
  s.end_effector = robot_at(space, {0.1, 0.1, 0.1}, 0.5);
  s.objects["A"] = object_at(space, {0.3, 0.4, 0.0});
  const SystemState same = observe(space, s, 0.0, 1);
  EXPECT_EQ(same.objects.at("A"), s.objects.at("A"));
  EXPECT_THROW(observe(space, s, -1.0, 1), ValidationError);

  constexpr int kDraws = 10000;
  constexpr double kNoise = 0.01;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const SystemState o = observe(space, s, kNoise, 1000 + i);
    EXPECT_EQ(o.end_effector, s.end_effector);
    const Point& a = o.objects.at("A");
    EXPECT_NEAR(a.segment<4>(3).norm(), 1.0, 1e-12);
    const double dx = a[0] - 0.3;
    sum += dx;
    sum_sq += dx * dx;
  }
  const double mean = sum / kDraws;
  const double sd = std::sqrt(sum_sq / kDraws - mean * mean);
  EXPECT_NEAR(sd, kNoise, 0.05 * kNoise);
  EXPECT_EQ(observe(space, s, kNoise, 7).objects.at("A"), observe(space, s, kNoise, 7).objects.at("A"));
}

TEST(ScenarioConfig, Validation) {
  ScenarioConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sample_noise = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.name = "nope";
  try {
    c.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("fig3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("chain"), std::string::npos);
  }
  c = {};
  c.branches = 3;
  EXPECT_THROW(c.validate(), ValidationError);
}

}  // namespace
}  // namespace skillseq
