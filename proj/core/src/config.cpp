#include "skillseq/config.hpp"

#include <cmath>
#include <set>

#include "skillseq/error.hpp"
#include "skillseq/serialization.hpp"

namespace skillseq {

namespace {

using io::Json;

void reject_unknown(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ValidationError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read(const Json& section, const char* key, T& target) {
  if (section.contains(key)) target = section.at(key).get<T>();
}

const char* init_name(EmInit init) { return init == EmInit::KMeans ? "kmeans" : "time_binning"; }

}  // namespace

void ToolConfig::validate() const {
  if (!(tracking.control_weight > 0.0)) throw ValidationError("control_weight must be positive");
  if (!(tracking.dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(tracking.terminal_weight > 0.0)) throw ValidationError("terminal_weight must be positive");
  if (tracking.passes < 1) throw ValidationError("passes must be at least 1");
  if (!(attachment.grasp_radius > 0.0)) throw ValidationError("grasp_radius must be positive");
  if (!(em_tolerance > 0.0)) throw ValidationError("em tolerance must be positive");
  if (em_max_iterations < 1) throw ValidationError("em max_iterations must be at least 1");
  if (em_restarts < 1) throw ValidationError("em restarts must be at least 1");
  if (!(divergence_threshold > 0.0)) {
    throw ValidationError("divergence_threshold must be positive");
  }
  if (!(success_tolerance > 0.0)) throw ValidationError("success_tolerance must be positive");
}

ToolConfig config_from_json_text(const std::string& text) {
  const Json j = io::parse(text, "config");
  ToolConfig c;
  try {
    reject_unknown(j, {"tracking", "attachment", "em", "viterbi", "execution"}, "");
    if (j.contains("tracking")) {
      const Json& s = j["tracking"];
      reject_unknown(s, {"control_weight", "dt", "terminal_weight", "passes"}, "tracking.");
      read(s, "control_weight", c.tracking.control_weight);
      read(s, "dt", c.tracking.dt);
      read(s, "terminal_weight", c.tracking.terminal_weight);
      read(s, "passes", c.tracking.passes);
    }
    if (j.contains("attachment")) {
      const Json& s = j["attachment"];
      reject_unknown(s, {"grasp_radius", "gripper_threshold"}, "attachment.");
      read(s, "grasp_radius", c.attachment.grasp_radius);
      read(s, "gripper_threshold", c.attachment.gripper_threshold);
    }
    if (j.contains("em")) {
      const Json& s = j["em"];
      reject_unknown(s, {"tolerance", "max_iterations", "init", "restarts"}, "em.");
      read(s, "tolerance", c.em_tolerance);
      read(s, "max_iterations", c.em_max_iterations);
      read(s, "restarts", c.em_restarts);
      if (s.contains("init")) {
        const std::string init = s["init"].get<std::string>();
        if (init == "kmeans") {
          c.em_init = EmInit::KMeans;
        } else if (init == "time_binning") {
          c.em_init = EmInit::TimeBinning;
        } else {
          throw ValidationError("em.init must be 'time_binning' or 'kmeans'");
        }
      }
    }
    if (j.contains("viterbi")) {
      const Json& s = j["viterbi"];
      reject_unknown(s, {"cap_durations"}, "viterbi.");
      read(s, "cap_durations", c.viterbi.cap_durations);
    }
    if (j.contains("execution")) {
      const Json& s = j["execution"];
      reject_unknown(s, {"divergence_threshold", "success_tolerance"}, "execution.");
      read(s, "divergence_threshold", c.divergence_threshold);
      read(s, "success_tolerance", c.success_tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_to_json_text(const ToolConfig& c) {
  Json j;
  j["tracking"] = {{"control_weight", c.tracking.control_weight},
                   {"dt", c.tracking.dt},
                   {"terminal_weight", c.tracking.terminal_weight},
                   {"passes", c.tracking.passes}};
  j["attachment"] = {{"grasp_radius", c.attachment.grasp_radius},
                     {"gripper_threshold", c.attachment.gripper_threshold}};
  j["em"] = {{"tolerance", c.em_tolerance},
             {"max_iterations", c.em_max_iterations},
             {"init", init_name(c.em_init)},
             {"restarts", c.em_restarts}};
  j["viterbi"] = {{"cap_durations", c.viterbi.cap_durations}};
  j["execution"] = {{"divergence_threshold", c.divergence_threshold},
                    {"success_tolerance", c.success_tolerance}};
  return io::dump(j);
}

ToolConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return config_from_json_text(io::read_file(path));
}

}  // namespace skillseq
