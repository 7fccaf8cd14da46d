#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "skillseq/cascade.hpp"
#include "skillseq/serialization.hpp"
#include "skillseq/workspace.hpp"

namespace skillseq {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

std::string read(const fs::path& p) { return io::read_file(p.string()); }

// One generated, learned and composed chain shared by the whole suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("skillseq_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run({"gen", "--scenario", "chain", "--seed", "3", "--out", p("data")}).code, 0);
    ASSERT_EQ(run({"learn", p("data/pick_place.json"), "-K", "5", "--init", "kmeans", "--out",
                   p("pick.model.json")})
                  .code,
              0);
    ASSERT_EQ(run({"learn", p("data/release.json"), "-K", "3", "--out", p("release.model.json")})
                  .code,
              0);
    ASSERT_EQ(run({"compose", p("pick.model.json"), p("release.model.json"), "--out",
                   p("joint.model.json")})
                  .code,
              0);
    const ChainEpisode ep = sample_chain_episode({.name = "chain", .seed = 3}, 17, "left");
    io::write_file(p("initial.json"), io::dump(io::to_json(ep.initial)));
    io::write_file(p("goal.json"), io::dump(io::to_json(ep.skill_finals.back())));
    io::write_file(p("pick_goal.json"), io::dump(io::to_json(ep.skill_finals.front())));
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string p(const std::string& name) { return (dir_ / name).string(); }

  static inline fs::path dir_;
};

TEST_F(Cli, HelpVersionAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  const Result v = run({"--version"});
  EXPECT_EQ(v.code, cli::kExitOk);
  EXPECT_TRUE(contains(v.out, SKILLSEQ_VERSION_STRING));
  EXPECT_EQ(run({}).code, cli::kExitInput);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitInput);
  EXPECT_EQ(run({"learn", p("data/release.json")}).code, cli::kExitInput);
}

TEST_F(Cli, InvalidScenarioListsTheValidOnes) {
  const Result r = run({"gen", "--scenario", "kitchen", "--out", p("bad")});
  EXPECT_EQ(r.code, cli::kExitInput);
  EXPECT_TRUE(contains(r.err, "fig3")) << r.err;
  EXPECT_TRUE(contains(r.err, "chain")) << r.err;
}

TEST_F(Cli, GenIsDeterministicPerSeed) {
  ASSERT_EQ(run({"gen", "--scenario", "fig3", "--seed", "5", "--out", p("g1")}).code, 0);
  ASSERT_EQ(run({"gen", "--scenario", "fig3", "--seed", "5", "--out", p("g2")}).code, 0);
  ASSERT_EQ(run({"gen", "--scenario", "fig3", "--seed", "6", "--out", p("g3")}).code, 0);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(p("g1"))) files.push_back(e.path().filename());
  ASSERT_EQ(files.size(), 2u);  // scenario + dataset
  for (const auto& f : files) {
    EXPECT_EQ(read(dir_ / "g1" / f), read(dir_ / "g2" / f)) << f;
    EXPECT_NE(read(dir_ / "g1" / f), read(dir_ / "g3" / f)) << f;
  }
}

TEST_F(Cli, ScenarioConfigFileDrivesGen) {
  ASSERT_EQ(run({"gen", "--scenario", "chain", "--seed", "3", "--out", p("again")}).code, 0);
  EXPECT_EQ(read(dir_ / "again" / "release.json"), read(dir_ / "data" / "release.json"));
  ASSERT_EQ(run({"gen", "--scenario-config", p("data/scenario.json"), "--seed", "3", "--out",
                 p("from_file")})
                .code,
            0);
  EXPECT_EQ(read(dir_ / "from_file" / "pick_place.json"), read(dir_ / "data" / "pick_place.json"));
}

TEST_F(Cli, ModelsRoundTripByteIdentical) {
  for (const char* name : {"pick.model.json", "release.model.json", "joint.model.json"}) {
    const std::string bytes = read(dir_ / name);
    EXPECT_EQ(io::dump(io::to_json(io::model_from_json(io::parse(bytes, name)))), bytes) << name;
  }
}

TEST_F(Cli, LearnIsDeterministic) {
  ASSERT_EQ(run({"learn", p("data/release.json"), "-K", "3", "--out", p("release2.model.json")})
                .code,
            0);
  EXPECT_EQ(read(dir_ / "release2.model.json"), read(dir_ / "release.model.json"));
}

TEST_F(Cli, ComposeMatchesTheLibrary) {
  std::vector<SkillModel> skills;
  for (const char* name : {"pick.model.json", "release.model.json"}) {
    skills.push_back(io::model_from_json(io::parse(read(dir_ / name), name)).skills.front());
  }
  const CascadedModel joint = cascade_sequence(skills);
  EXPECT_EQ(io::dump(io::to_json(joint)), read(dir_ / "joint.model.json"));
  const Result r = run({"inspect", p("joint.model.json")});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "K=" + std::to_string(joint.size()))) << r.out;
}

TEST_F(Cli, InspectKnowsEverySchema) {
  for (const char* name : {"data/pick_place.json", "data/scenario.json", "initial.json",
                           "pick.model.json"}) {
    EXPECT_EQ(run({"inspect", p(name)}).code, 0) << name;
  }
  io::write_file(p("junk.json"), R"({"hello": 1})");
  EXPECT_EQ(run({"inspect", p("junk.json")}).code, cli::kExitInput);
  EXPECT_EQ(run({"inspect", p("missing.json")}).code, cli::kExitInput);
}

TEST_F(Cli, PlanNeedsAGoal) {
  const Result r = run({"plan", p("joint.model.json"), "--initial", p("initial.json")});
  EXPECT_EQ(r.code, cli::kExitInput);
  EXPECT_EQ(run({"plan", p("joint.model.json"), "--initial", p("initial.json"), "--goal",
                 p("missing.json")})
                .code,
            cli::kExitInput);
}

TEST_F(Cli, PlanThenTrackWritesAgreeingFiles) {
  const Result plan = run({"plan", p("joint.model.json"), "--initial", p("initial.json"), "--goal",
                           p("goal.json"), "--out", p("plan.json")});
  ASSERT_EQ(plan.code, 0) << plan.err;
  EXPECT_TRUE(contains(plan.out, "skill pick_place")) << plan.out;
  EXPECT_TRUE(contains(plan.out, "skill release")) << plan.out;
  const Result track = run({"track", p("joint.model.json"), p("plan.json"), "--out",
                            p("traj.json")});
  ASSERT_EQ(track.code, 0) << track.err;

  const io::TrajectoryFile traj = io::trajectory_from_json(io::parse(read(dir_ / "traj.json"), "t"));
  const io::Json planned = io::parse(read(dir_ / "plan.json"), "plan");
  EXPECT_EQ(static_cast<int>(traj.states.size()), planned["horizon"].get<int>());
  EXPECT_EQ(read(dir_ / "traj.csv"), io::trajectory_csv(traj));
  std::istringstream csv(read(dir_ / "traj.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(traj.states.size()));
}

TEST_F(Cli, TrackRejectsAPlanFromAnotherModel) {
  ASSERT_EQ(run({"plan", p("pick.model.json"), "--initial", p("initial.json"), "--goal",
                 p("pick_goal.json"), "--out", p("pick_plan.json")})
                .code,
            0);
  const Result r = run({"track", p("joint.model.json"), p("pick_plan.json"), "--out",
                        p("wrong.json")});
  EXPECT_EQ(r.code, cli::kExitInput);
  EXPECT_TRUE(contains(r.err, "not computed from")) << r.err;
}

TEST_F(Cli, RunReportsTimingAndMode) {
  const Result closed = run({"run", p("joint.model.json"), "--trials", "2", "--seed", "100"});
  ASSERT_EQ(closed.code, 0) << closed.err;
  EXPECT_TRUE(contains(closed.out, "mode=closed-loop"));
  EXPECT_TRUE(contains(closed.out, "plan_ms="));
  EXPECT_TRUE(contains(closed.out, "skill release"));
  EXPECT_TRUE(contains(closed.out, "track_ms="));
  const Result open = run({"run", p("joint.model.json"), "--trials", "2", "--open-loop"});
  ASSERT_EQ(open.code, 0) << open.err;
  EXPECT_TRUE(contains(open.out, "mode=open-loop"));
  EXPECT_EQ(run({"run", p("joint.model.json"), "--trials", "0"}).code, cli::kExitInput);
  EXPECT_EQ(run({"run", p("joint.model.json"), "--scenario", "fig3"}).code, cli::kExitInput);
}

TEST_F(Cli, NumericalFailuresExitWithThree) {
  const Result r =
      run({"run", p("joint.model.json"), "--trials", "1", "--divergence-threshold", "1e-12"});
  EXPECT_EQ(r.code, cli::kExitNumerical);
  EXPECT_TRUE(contains(r.err, "diverged")) << r.err;
}

TEST_F(Cli, BinaryExitCodes) {
  auto status = [](const std::string& args) {
    const int raw = std::system((std::string(SKILLSEQ_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("--version"), 0);
  EXPECT_EQ(status("inspect " + p("pick.model.json")), 0);
  EXPECT_EQ(status("inspect " + p("missing.json")), 2);
  EXPECT_EQ(status("run " + p("joint.model.json") + " --trials 1 --divergence-threshold 1e-12"), 3);
}

}  // namespace
}  // namespace skillseq
