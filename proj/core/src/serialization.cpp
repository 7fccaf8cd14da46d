#include "skillseq/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "skillseq/error.hpp"

namespace skillseq::io {

namespace {

constexpr const char* kDatasetSchema = "skillseq/dataset";
constexpr const char* kModelSchema = "skillseq/model";
constexpr const char* kStateSchema = "skillseq/state";
constexpr const char* kPlanSchema = "skillseq/plan";
constexpr const char* kTrajectorySchema = "skillseq/trajectory";
constexpr const char* kScenarioSchema = "skillseq/scenario";

Json header(const char* schema) {
  Json j;
  j["schema"] = schema;
  j["version"] = kSchemaVersion;
  return j;
}

void check_header(const Json& j, const char* schema) {
  if (!j.is_object()) throw ValidationError(std::string("expected a ") + schema + " document");
  if (!j.contains("schema") || j["schema"] != schema) {
    throw ValidationError(std::string("document is not a ") + schema + " file");
  }
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != kSchemaVersion) {
    throw ValidationError(std::string("unsupported ") + schema + " version");
  }
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ValidationError(std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

double number(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

int integer(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_integer()) {
    throw ValidationError(std::string("field '") + key + "' must be an integer");
  }
  return v.get<int>();
}

std::string text(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

// Runs a decoder and reports malformed JSON structure as a validation error.
template <typename F>
auto decoding(const std::string& what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

Json pose_json(const Pose& p) {
  const Eigen::Vector4d q = quat::to_coeffs(p.orientation);
  return Json{{"position", {p.position.x(), p.position.y(), p.position.z()}},
              {"orientation", {q[0], q[1], q[2], q[3]}}};
}

Pose pose_from(const Json& j) {
  const Vector pos = vector_from_json(field(j, "position"), "pose position");
  const Vector q = vector_from_json(field(j, "orientation"), "pose orientation");
  if (pos.size() != 3 || q.size() != 4) throw ValidationError("pose needs 3 + 4 coordinates");
  if (std::abs(q.norm() - 1.0) > 1e-9) throw ValidationError("pose orientation is not unit");
  Pose p;
  p.position = pos;
  p.orientation = quat::from_coeffs(q);
  return p;
}

Json slot_json(const FrameSlot& s) {
  return Json{{"id", s.id}, {"base", s.base}, {"relative", pose_json(s.relative)}};
}

FrameSlot slot_from(const Json& j) {
  FrameSlot s;
  s.id = text(j, "id");
  s.base = text(j, "base");
  s.relative = pose_from(field(j, "relative"));
  return s;
}

Json slots_json(const std::vector<FrameSlot>& slots) {
  Json out = Json::array();
  for (const auto& s : slots) out.push_back(slot_json(s));
  return out;
}

std::vector<FrameSlot> slots_from(const Json& j) {
  std::vector<FrameSlot> out;
  for (const auto& s : j) out.push_back(slot_from(s));
  return out;
}

Json frame_json(const Frame& f) {
  return Json{{"id", f.id()},
              {"object", f.object()},
              {"linear", to_json(f.linear())},
              {"origin", point_to_json(f.origin())}};
}

Frame frame_from(const Json& j) {
  return Frame(matrix_from_json(field(j, "linear"), "frame linear part"),
               vector_from_json(field(j, "origin"), "frame origin"), text(j, "id"),
               text(j, "object"));
}

Json gaussian_json(const RiemannianGaussian& g) {
  return Json{{"mean", point_to_json(g.mean)}, {"covariance", to_json(g.covariance)}};
}

RiemannianGaussian gaussian_from(const Json& j, const Manifold& m) {
  RiemannianGaussian g;
  g.mean = vector_from_json(field(j, "mean"), "Gaussian mean");
  g.covariance = matrix_from_json(field(j, "covariance"), "Gaussian covariance");
  m.check_point(g.mean, "Gaussian mean");
  if (g.covariance.rows() != m.tangent_dim() || g.covariance.cols() != m.tangent_dim()) {
    throw ValidationError("Gaussian covariance has the wrong size for " + m.name());
  }
  check_spd(g.covariance, "Gaussian covariance");
  return g;
}

Json points_json(const std::vector<Point>& pts) {
  Json out = Json::array();
  for (const auto& p : pts) out.push_back(point_to_json(p));
  return out;
}

std::vector<Point> points_from(const Json& j, const char* what) {
  std::vector<Point> out;
  for (const auto& p : j) out.push_back(vector_from_json(p, what));
  return out;
}

Json ints_json(const std::vector<int>& v) { return Json(v); }

std::vector<int> ints_from(const Json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array");
  std::vector<int> out;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ValidationError(std::string(what) + " must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

Json demo_json(const Demonstration& d) {
  Json j;
  j["id"] = d.id;
  j["branch"] = d.branch;
  Json frames = Json::array();
  for (const auto& f : d.frames) frames.push_back(frame_json(f));
  j["frames"] = frames;
  j["trajectory"] = points_json(d.trajectory);
  if (d.initial_state) j["initial_state"] = to_json(*d.initial_state);
  if (d.final_state) j["final_state"] = to_json(*d.final_state);
  return j;
}

Demonstration demo_from(const Json& j, const std::string& skill, double rate,
                        const StateSpace& space) {
  Demonstration d;
  d.skill = skill;
  d.sample_rate = rate;
  d.id = text(j, "id");
  d.branch = text(j, "branch");
  for (const auto& f : field(j, "frames")) d.frames.push_back(frame_from(f));
  d.trajectory = points_from(field(j, "trajectory"), "trajectory sample");
  if (j.contains("initial_state")) d.initial_state = state_from_json(j["initial_state"], space);
  if (j.contains("final_state")) d.final_state = state_from_json(j["final_state"], space);
  return d;
}

Json tpgmm_json(const TPGMM& g) {
  Json comps = Json::array();
  for (const auto& row : g.components) {
    Json per = Json::array();
    for (const auto& c : row) per.push_back(c ? gaussian_json(*c) : Json());
    comps.push_back(per);
  }
  return Json{{"manifold", g.manifold.name()},
              {"frames", slots_json(g.frames)},
              {"priors", point_to_json(g.priors)},
              {"components", comps}};
}

TPGMM tpgmm_from(const Json& j) {
  TPGMM g;
  g.manifold = Manifold::parse(text(j, "manifold"));
  g.frames = slots_from(field(j, "frames"));
  g.priors = vector_from_json(field(j, "priors"), "priors");
  for (const auto& row : field(j, "components")) {
    std::vector<std::optional<RiemannianGaussian>> per;
    for (const auto& c : row) {
      if (c.is_null()) {
        per.emplace_back();
      } else {
        per.emplace_back(gaussian_from(c, g.manifold));
      }
    }
    g.components.push_back(std::move(per));
  }
  return g;
}

Json hsmm_json(const TPHSMM& h) {
  Json durations = Json::array();
  for (const auto& d : h.durations) durations.push_back({{"mean", d.mean}, {"stddev", d.stddev}});
  return Json{{"transitions", to_json(h.transitions)},
              {"durations", durations},
              {"initial", point_to_json(h.initial)},
              {"final_weights", point_to_json(h.final_weights)}};
}

TPHSMM hsmm_from(const Json& j, TPGMM gmm) {
  TPHSMM h;
  h.gmm = std::move(gmm);
  h.transitions = matrix_from_json(field(j, "transitions"), "transitions");
  for (const auto& d : field(j, "durations")) {
    h.durations.push_back({number(d, "mean"), number(d, "stddev")});
  }
  h.initial = vector_from_json(field(j, "initial"), "initial distribution");
  h.final_weights = vector_from_json(field(j, "final_weights"), "final weights");
  return h;
}

Json entries_json(const ConditionSet& set) {
  Json out = Json::array();
  for (const auto& e : set) {
    out.push_back({{"frame", slot_json(e.frame)},
                   {"time", e.time == FrameTime::Initial ? "initial" : "final"},
                   {"gaussian", gaussian_json(e.gaussian)}});
  }
  return out;
}

ConditionSet entries_from(const Json& j, const Manifold& m) {
  ConditionSet out;
  for (const auto& e : j) {
    ConditionEntry entry;
    entry.frame = slot_from(field(e, "frame"));
    const std::string time = text(e, "time");
    if (time != "initial" && time != "final") {
      throw ValidationError("condition entry time must be 'initial' or 'final'");
    }
    entry.time = time == "initial" ? FrameTime::Initial : FrameTime::Final;
    entry.gaussian = gaussian_from(field(e, "gaussian"), m);
    out.push_back(std::move(entry));
  }
  return out;
}

Json state_sets_json(const std::map<int, ConditionSet>& sets) {
  Json out = Json::array();
  for (const auto& [k, set] : sets) out.push_back({{"state", k}, {"entries", entries_json(set)}});
  return out;
}

std::map<int, ConditionSet> state_sets_from(const Json& j, const Manifold& m) {
  std::map<int, ConditionSet> out;
  for (const auto& s : j) {
    const int k = integer(s, "state");
    if (!out.emplace(k, entries_from(field(s, "entries"), m)).second) {
      throw ValidationError("duplicate condition state " + std::to_string(k));
    }
  }
  return out;
}

Json conditions_json(const ConditionModels& c) {
  Json effect = Json::array();
  for (const auto& [k, entities] : c.effect) {
    Json per = Json::object();
    for (const auto& [name, set] : entities) per[name] = entries_json(set);
    effect.push_back({{"state", k}, {"entities", per}});
  }
  Json manipulated = Json::object();
  for (const auto& [name, flag] : c.manipulated) manipulated[name] = flag;
  return Json{{"objects", c.objects},
              {"manipulated", manipulated},
              {"warnings", c.warnings},
              {"precondition", state_sets_json(c.precondition)},
              {"final_condition", state_sets_json(c.final_condition)},
              {"effect", effect}};
}

ConditionModels conditions_from(const Json& j, const StateSpace& space) {
  ConditionModels c;
  c.space = space;
  c.objects = field(j, "objects").get<std::vector<std::string>>();
  for (const auto& [name, flag] : field(j, "manipulated").items()) {
    c.manipulated[name] = flag.get<bool>();
  }
  c.warnings = field(j, "warnings").get<std::vector<std::string>>();
  c.precondition = state_sets_from(field(j, "precondition"), space.robot);
  c.final_condition = state_sets_from(field(j, "final_condition"), space.robot);
  for (const auto& s : field(j, "effect")) {
    auto& per = c.effect[integer(s, "state")];
    for (const auto& [name, set] : field(s, "entities").items()) {
      per[name] = entries_from(set, space.manifold_of(name));
    }
  }
  return c;
}

Json skill_body(const SkillModel& s) {
  Json bindings = Json::object();
  for (const auto& slot : s.hsmm.gmm.frames) bindings[slot.id] = slot.base;
  Json j = header(kModelSchema);
  j["metadata"] = {{"skill", s.name},
                   {"tool_version", SKILLSEQ_VERSION_STRING},
                   {"demo_count", s.demo_count},
                   {"seed", s.seed},
                   {"sample_rate", s.sample_rate},
                   {"mean_length", s.mean_length},
                   {"final_log_likelihood", s.final_log_likelihood},
                   {"frame_bindings", bindings}};
  j["space"] = to_json(s.space);
  j["tpgmm"] = tpgmm_json(s.hsmm.gmm);
  j["hsmm"] = hsmm_json(s.hsmm);
  j["conditions"] = conditions_json(s.conditions);
  return j;
}

SkillModel skill_body_from(const Json& j) {
  check_header(j, kModelSchema);
  const Json& meta = field(j, "metadata");
  SkillModel s;
  s.name = text(meta, "skill");
  s.demo_count = integer(meta, "demo_count");
  const Json& seed = field(meta, "seed");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
    throw ValidationError("metadata seed must be an integer");
  }
  s.seed = seed.get<std::uint64_t>();
  s.sample_rate = number(meta, "sample_rate");
  s.mean_length = number(meta, "mean_length");
  s.final_log_likelihood = number(meta, "final_log_likelihood");
  s.space = space_from_json(field(j, "space"));
  s.hsmm = hsmm_from(field(j, "hsmm"), tpgmm_from(field(j, "tpgmm")));
  s.conditions = conditions_from(field(j, "conditions"), s.space);
  // Bindings are informational; they must agree with the frame slots.
  const Json& bindings = field(meta, "frame_bindings");
  for (const auto& slot : s.hsmm.gmm.frames) {
    if (!bindings.contains(slot.id) || bindings[slot.id] != slot.base) {
      throw ValidationError("frame binding of '" + slot.id + "' disagrees with the frame set");
    }
  }
  return s;
}

Json scenario_body(const ScenarioConfig& c) {
  Json j = header(kScenarioSchema);
  j["scenario"] = c.name;
  j["seed"] = c.seed;
  j["demos_per_branch"] = c.demos_per_branch;
  j["branches"] = c.branches;
  j["sample_noise"] = c.sample_noise;
  j["perception_noise"] = c.perception_noise;
  j["grasp_noise"] = c.grasp_noise;
  j["layout_spread"] = c.layout_spread;
  j["sample_rate"] = c.sample_rate;
  return j;
}

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

// CSV column names of one manifold's ambient coordinates.
std::vector<std::string> coordinate_names(const Manifold& m) {
  std::vector<std::string> names;
  bool seen_position = false;
  for (std::size_t b = 0; b < m.blocks().size(); ++b) {
    const Block& block = m.blocks()[b];
    if (block.kind == BlockKind::UnitQuaternion) {
      for (const char* n : {"qw", "qx", "qy", "qz"}) names.emplace_back(n);
    } else if (!seen_position && (block.size == 2 || block.size == 3)) {
      seen_position = true;
      for (int i = 0; i < block.size; ++i) names.push_back(std::string("p") + "xyz"[i]);
    } else if (block.size == 1 && seen_position) {
      names.emplace_back("gripper");
    } else {
      for (int i = 0; i < block.size; ++i) {
        names.push_back("e" + std::to_string(b) + "_" + std::to_string(i));
      }
    }
  }
  return names;
}

}  // namespace

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json parse(const std::string& content, const std::string& what) {
  try {
    return Json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(what + " is not valid JSON: " + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << content;
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json point_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) {
      throw ValidationError(what + " has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ValidationError(what + " must hold numbers");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json to_json(const StateSpace& space) {
  return Json{{"robot", space.robot.name()}, {"object", space.object.name()}};
}

StateSpace space_from_json(const Json& j) {
  return decoding("state space", [&] {
    StateSpace s;
    s.robot = Manifold::parse(text(j, "robot"));
    s.object = Manifold::parse(text(j, "object"));
    return s;
  });
}

Json to_json(const SystemState& state) {
  Json j = header(kStateSchema);
  j["timestamp"] = state.timestamp;
  j["end_effector"] = point_to_json(state.end_effector);
  Json objects = Json::object();
  for (const auto& [name, p] : state.objects) objects[name] = point_to_json(p);
  j["objects"] = objects;
  return j;
}

SystemState state_from_json(const Json& j, const StateSpace& space) {
  return decoding("system state", [&] {
    check_header(j, kStateSchema);
    SystemState s;
    s.timestamp = number(j, "timestamp");
    s.end_effector = vector_from_json(field(j, "end_effector"), "end-effector state");
    space.robot.check_point(s.end_effector, "end-effector state");
    for (const auto& [name, p] : field(j, "objects").items()) {
      if (name == kEndEffector || name == kGlobalFrame) {
        throw ValidationError("object name '" + name + "' is reserved");
      }
      Point x = vector_from_json(p, "object pose");
      space.object.check_point(x, "object pose");
      s.objects.emplace(name, std::move(x));
    }
    return s;
  });
}

void Dataset::validate() const {
  if (skill.empty()) throw ValidationError("dataset has no skill name");
  if (demos.empty()) throw ValidationError("dataset '" + skill + "' has no demonstrations");
  for (const auto& d : demos) {
    d.validate(space.robot);
    if (d.frames.size() != frames.size()) {
      throw ValidationError("demo '" + d.id + "' does not carry one frame per frame slot");
    }
    for (std::size_t p = 0; p < frames.size(); ++p) {
      if (d.frames[p].id() != frames[p].id) {
        throw ValidationError("demo '" + d.id + "' frames are not ordered like the frame slots");
      }
    }
    if (d.sample_rate != demos.front().sample_rate) {
      throw ValidationError("dataset '" + skill + "' mixes sample rates");
    }
  }
}

Json to_json(const Dataset& data) {
  data.validate();
  Json j = header(kDatasetSchema);
  j["skill"] = data.skill;
  j["space"] = to_json(data.space);
  j["objects"] = data.objects;
  j["frames"] = slots_json(data.frames);
  j["sample_rate"] = data.demos.front().sample_rate;
  Json demos = Json::array();
  for (const auto& d : data.demos) demos.push_back(demo_json(d));
  j["demos"] = demos;
  return j;
}

Dataset dataset_from_json(const Json& j) {
  return decoding("dataset", [&] {
    check_header(j, kDatasetSchema);
    Dataset d;
    d.skill = text(j, "skill");
    d.space = space_from_json(field(j, "space"));
    d.objects = field(j, "objects").get<std::vector<std::string>>();
    d.frames = slots_from(field(j, "frames"));
    const double rate = number(j, "sample_rate");
    if (!(rate > 0.0)) throw ValidationError("sample_rate must be positive");
    for (const auto& demo : field(j, "demos")) {
      d.demos.push_back(demo_from(demo, d.skill, rate, d.space));
    }
    d.validate();
    return d;
  });
}

Json to_json(const SkillModel& model) { return skill_body(model); }

SkillModel skill_from_json(const Json& j) {
  return decoding("skill model", [&] {
    SkillModel s = skill_body_from(j);
    s.validate();
    return s;
  });
}

Json to_json(const CascadedModel& model) {
  Json j = skill_body(model.joint);
  if (model.skills.size() <= 1) return j;
  Json prov = Json::array();
  for (const auto& o : model.provenance) {
    prov.push_back({{"skill", o.skill}, {"source", o.source}, {"chain", o.chain}});
  }
  j["provenance"] = prov;
  Json skills = Json::array();
  for (const auto& s : model.skills) skills.push_back(skill_body(s));
  j["skills"] = skills;
  return j;
}

CascadedModel model_from_json(const Json& j) {
  return decoding("model", [&] {
    SkillModel joint = skill_body_from(j);
    if (!j.contains("provenance")) {
      joint.validate();
      return as_sequence(joint);
    }
    CascadedModel m;
    m.joint = std::move(joint);
    for (const auto& o : field(j, "provenance")) {
      m.provenance.push_back(
          {integer(o, "skill"), integer(o, "source"), ints_from(field(o, "chain"), "chain")});
    }
    for (const auto& s : field(j, "skills")) {
      m.skills.push_back(skill_body_from(s));
      m.skills.back().validate();
    }
    m.validate();
    return m;
  });
}

Json to_json(const PlanFile& plan, const StateSpace& space) {
  (void)space;
  Json j = header(kPlanSchema);
  j["model_hash"] = plan.model_hash;
  j["horizon"] = plan.horizon;
  j["log_score"] = plan.sequence.log_score;
  j["states"] = ints_json(plan.sequence.states);
  Json segs = Json::array();
  for (const auto& s : plan.segments) {
    segs.push_back({{"skill", s.skill},
                    {"start", s.start},
                    {"length", s.length},
                    {"joint_states", s.joint_states},
                    {"source_states", s.source_states}});
  }
  j["segments"] = segs;
  Json refs = Json::array();
  for (const auto& g : plan.references) refs.push_back(gaussian_json(g));
  j["references"] = refs;
  j["initial"] = to_json(plan.initial);
  j["goal"] = to_json(plan.goal);
  return j;
}

PlanFile plan_from_json(const Json& j, const StateSpace& space) {
  return decoding("plan", [&] {
    check_header(j, kPlanSchema);
    PlanFile p;
    p.model_hash = text(j, "model_hash");
    p.horizon = integer(j, "horizon");
    p.sequence.log_score = number(j, "log_score");
    p.sequence.states = ints_from(field(j, "states"), "states");
    for (const auto& s : field(j, "segments")) {
      SkillSegment seg;
      seg.skill = integer(s, "skill");
      seg.start = integer(s, "start");
      seg.length = integer(s, "length");
      seg.joint_states = ints_from(field(s, "joint_states"), "joint_states");
      seg.source_states = ints_from(field(s, "source_states"), "source_states");
      if (static_cast<int>(seg.joint_states.size()) != seg.length ||
          seg.source_states.size() != seg.joint_states.size()) {
        throw ValidationError("plan segment length disagrees with its states");
      }
      p.segments.push_back(std::move(seg));
    }
    for (const auto& g : field(j, "references")) {
      p.references.push_back(gaussian_from(g, space.robot));
    }
    p.initial = state_from_json(field(j, "initial"), space);
    p.goal = state_from_json(field(j, "goal"), space);
    if (p.horizon < 1 || static_cast<int>(p.sequence.states.size()) != p.horizon ||
        static_cast<int>(p.references.size()) != p.horizon) {
      throw ValidationError("plan horizon disagrees with its states or references");
    }
    int covered = 0;
    for (const auto& s : p.segments) {
      if (s.start != covered) throw ValidationError("plan segments are not contiguous");
      covered += s.length;
    }
    if (covered != p.horizon) throw ValidationError("plan segments do not cover the horizon");
    return p;
  });
}

Json to_json(const TrajectoryFile& traj) {
  Json j = header(kTrajectorySchema);
  j["manifold"] = traj.manifold;
  j["dt"] = traj.dt;
  j["cost"] = traj.cost;
  j["states"] = points_json(traj.states);
  j["velocities"] = points_json(traj.velocities);
  j["controls"] = points_json(traj.controls);
  return j;
}

TrajectoryFile trajectory_from_json(const Json& j) {
  return decoding("trajectory", [&] {
    check_header(j, kTrajectorySchema);
    TrajectoryFile t;
    t.manifold = text(j, "manifold");
    const Manifold m = Manifold::parse(t.manifold);
    t.dt = number(j, "dt");
    t.cost = number(j, "cost");
    t.states = points_from(field(j, "states"), "trajectory state");
    t.velocities = points_from(field(j, "velocities"), "trajectory velocity");
    t.controls = points_from(field(j, "controls"), "trajectory control");
    if (t.velocities.size() != t.states.size() || t.controls.size() != t.states.size()) {
      throw ValidationError("trajectory columns have different lengths");
    }
    for (std::size_t i = 0; i < t.states.size(); ++i) {
      m.check_point(t.states[i], "trajectory state");
      if (t.velocities[i].size() != m.tangent_dim() || t.controls[i].size() != m.tangent_dim()) {
        throw ValidationError("trajectory velocity or control has the wrong size");
      }
    }
    return t;
  });
}

std::string trajectory_csv(const TrajectoryFile& traj) {
  const Manifold m = Manifold::parse(traj.manifold);
  std::string out = "time";
  for (const auto& n : coordinate_names(m)) out += "," + n;
  for (int i = 0; i < m.tangent_dim(); ++i) out += ",v" + std::to_string(i);
  for (int i = 0; i < m.tangent_dim(); ++i) out += ",u" + std::to_string(i);
  out += "\n";
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    append_number(out, static_cast<double>(t) * traj.dt);
    for (const Vector* v : {&traj.states[t], &traj.velocities[t], &traj.controls[t]}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        out += ',';
        append_number(out, (*v)[i]);
      }
    }
    out += "\n";
  }
  return out;
}

Json to_json(const ScenarioConfig& config) { return scenario_body(config); }

ScenarioConfig scenario_from_json(const Json& j) {
  return decoding("scenario config", [&] {
    check_header(j, kScenarioSchema);
    static const std::vector<std::string> known = {
        "schema",         "version",          "scenario",    "seed",
        "demos_per_branch", "branches",       "sample_noise", "perception_noise",
        "grasp_noise",    "layout_spread",    "sample_rate"};
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ValidationError("unknown scenario key '" + key + "'");
      }
    }
    ScenarioConfig c;
    c.name = text(j, "scenario");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("demos_per_branch")) c.demos_per_branch = integer(j, "demos_per_branch");
    if (j.contains("branches")) c.branches = integer(j, "branches");
    if (j.contains("sample_noise")) c.sample_noise = number(j, "sample_noise");
    if (j.contains("perception_noise")) c.perception_noise = number(j, "perception_noise");
    if (j.contains("grasp_noise")) c.grasp_noise = number(j, "grasp_noise");
    if (j.contains("layout_spread")) c.layout_spread = number(j, "layout_spread");
    if (j.contains("sample_rate")) c.sample_rate = number(j, "sample_rate");
    c.validate();
    return c;
  });
}

}  // namespace skillseq::io
