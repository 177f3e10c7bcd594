#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tray/acoustic.hpp"
#include "tray/learning.hpp"
#include "tray/planner.hpp"
#include "tray/simulator.hpp"

namespace tray::io {

using nlohmann::json;

// Parses a JSON file; failures raise ConfigError naming the path.
json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Relative paths in a config resolve against the config file's directory.
std::filesystem::path resolve(const std::filesystem::path& base_dir, const std::string& path);

Eigen::Vector3d vec3(const json& j);
Eigen::VectorXd vecx(const json& j);
json to_json(const Eigen::VectorXd& v);

json to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const json& j);

json to_json(const PlanResult& result);

// Per object: displacement, fall flag, first slip time and slip intervals
// [start, end, peak relative speed] derived from the timeline.
json to_json(const SimResult& result);

json to_json(const SlidingEvent& event);
SlidingEvent sliding_event_from_json(const json& j);
std::string events_to_jsonl(const std::vector<SlidingEvent>& events);
std::vector<SlidingEvent> events_from_jsonl(const std::string& text);

// {"mass", "offset", "mu_s"}.
ObjectSpec object_from_json(const json& j);
// Either an "objects" array or a "ring" {"count", "radius", "mass", "mu_s"}
// placing objects evenly on a circle around the tray center.
std::vector<ObjectSpec> objects_from_json(const json& j);

// {"type": "constant", "value"} | {"type": "clamped_linear", "intercept",
// "rate", "floor"} | {"type": "model", "path"}.
AlphaPtr alpha_from_json(const json& j, const std::filesystem::path& base_dir);

// {"type": "none" | "coulomb" | "learned", "mu_s"?, "model"?, "alpha"?}.
FrictionSpec friction_from_json(const json& j, const std::filesystem::path& base_dir);

// {"mu_s_true", "kinetic_ratio", "alpha_star"?}.
GroundTruthFriction ground_truth_from_json(const json& j, const std::filesystem::path& base_dir);

SimSettings sim_settings_from_json(const json& j);
SynthParams synth_params_from_json(const json& j);
PlannerSettings planner_settings_from_json(const json& j);

// Plan request file: robot, start/goal positions (and optional yaws), IK
// seeds, objects, friction, horizon and step settings.
PlanRequest plan_request_from_json(const json& j, const std::filesystem::path& base_dir);

}  // namespace tray::io
