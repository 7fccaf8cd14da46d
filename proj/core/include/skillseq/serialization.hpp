#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skillseq/cascade.hpp"
#include "skillseq/execution.hpp"
#include "skillseq/lqt.hpp"
#include "skillseq/workspace.hpp"

/// JSON file formats. Matrices are arrays of rows, points are flat arrays with
/// quaternion blocks as [w, x, y, z]. Every document carries "schema" and
/// "version" fields; loading validates the content before returning.
namespace skillseq::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Demonstrations of one skill.
struct Dataset {
  std::string skill;
  StateSpace space;
  std::vector<std::string> objects;
  std::vector<FrameSlot> frames;
  std::vector<Demonstration> demos;

  void validate() const;
};

/// A decoded plan, bound to the model file it came from by hash.
struct PlanFile {
  std::string model_hash;
  int horizon = 0;
  StateSequence sequence;
  std::vector<SkillSegment> segments;
  /// Global Gaussian of the decoded state at every step, from the initial state.
  std::vector<RiemannianGaussian> references;
  SystemState initial;
  SystemState goal;
};

/// A tracked trajectory.
struct TrajectoryFile {
  std::string manifold;
  double dt = 0.02;
  std::vector<Point> states;
  std::vector<Tangent> velocities;
  std::vector<Tangent> controls;
  double cost = 0.0;
};

std::string dump(const Json& j);
Json parse(const std::string& text, const std::string& what);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& bytes);

Json to_json(const Matrix& m);
Json point_to_json(const Vector& v);
Matrix matrix_from_json(const Json& j, const std::string& what);
Vector vector_from_json(const Json& j, const std::string& what);

Json to_json(const StateSpace& space);
StateSpace space_from_json(const Json& j);

Json to_json(const SystemState& state);
SystemState state_from_json(const Json& j, const StateSpace& space);

Json to_json(const Dataset& data);
Dataset dataset_from_json(const Json& j);

Json to_json(const SkillModel& model);
SkillModel skill_from_json(const Json& j);

/// Single skills are written as skill models; composed models add the
/// provenance and embed their source skills.
Json to_json(const CascadedModel& model);
CascadedModel model_from_json(const Json& j);

Json to_json(const PlanFile& plan, const StateSpace& space);
PlanFile plan_from_json(const Json& j, const StateSpace& space);

Json to_json(const TrajectoryFile& traj);
TrajectoryFile trajectory_from_json(const Json& j);
/// time, position, quaternion, gripper, velocity, control columns.
std::string trajectory_csv(const TrajectoryFile& traj);

Json to_json(const ScenarioConfig& config);
ScenarioConfig scenario_from_json(const Json& j);

}  // namespace skillseq::io
