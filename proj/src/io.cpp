#include "tray/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tray/errors.hpp"

namespace tray::io {

namespace fs = std::filesystem;

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw InvalidArgument("failed writing " + path.string());
}

fs::path resolve(const fs::path& base_dir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

Eigen::Vector3d vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-vector, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Eigen::VectorXd vecx(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Trajectory& trajectory) {
  json points = json::array();
  for (const auto& p : trajectory.points) {
    points.push_back({{"q", to_json(p.q)}, {"qd", to_json(p.qd)}, {"qdd", to_json(p.qdd)}});
  }
  return {{"t_step", trajectory.t_step}, {"duration", trajectory.duration()}, {"points", points}};
}

Trajectory trajectory_from_json(const json& j) {
  try {
    Trajectory t;
    t.t_step = j.at("t_step").get<double>();
    for (const auto& p : j.at("points")) {
      t.points.push_back({vecx(p.at("q")), vecx(p.at("qd")), vecx(p.at("qdd"))});
    }
    if (t.points.empty()) throw ConfigError("trajectory has no points");
    const auto n = t.points.front().q.size();
    for (const auto& p : t.points) {
      if (p.q.size() != n || p.qd.size() != n || p.qdd.size() != n) {
        throw ConfigError("trajectory points differ in dimension");
      }
    }
    return t;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed trajectory: ") + e.what());
  }
}

json to_json(const PlanResult& result) {
  json margins = json::array();
  for (Eigen::Index i = 0; i < result.margins.rows(); ++i) {
    margins.push_back(to_json(Eigen::VectorXd(result.margins.row(i).transpose())));
  }
  json j = {{"status", plan_status_name(result.status)},
            {"duration", result.duration},
            {"sqp_iterations", result.sqp_iterations},
            {"total_sqp_iterations", result.total_sqp_iterations},
            {"solves", result.solves},
            {"margins", margins},
            {"trajectory", to_json(result.trajectory)}};
  if (result.margins.size() > 0) j["min_margin"] = result.margins.minCoeff();
  return j;
}

json to_json(const SimResult& result) {
  json objects = json::array();
  for (const auto& o : result.objects) {
    json intervals = json::array();
    double start = 0.0, peak = 0.0, last = 0.0;
    bool open = false;
    for (const auto& s : o.timeline) {
      if (s.slipping && !open) {
        open = true;
        start = s.t;
        peak = 0.0;
      }
      if (open && !s.slipping) {
        intervals.push_back({start, s.t, peak});
        open = false;
      }
      if (s.slipping) peak = std::max(peak, s.relative_speed);
      last = s.t;
    }
    if (open) intervals.push_back({start, last, peak});
    json obj = {{"displacement_mm", o.displacement_mm},
                {"fell_off", o.fell_off},
                {"final_position", {o.final_position.x(), o.final_position.y()}},
                {"slip_intervals", intervals}};
    obj["first_slip_time"] = o.first_slip_time ? json(*o.first_slip_time) : json(nullptr);
    objects.push_back(obj);
  }
  json j = {{"status", sim_status_name(result.status)},
            {"sim_dt", result.sim_dt},
            {"duration", result.duration},
            {"mean_displacement_mm", result.mean_displacement_mm()},
            {"any_fell_off", result.any_fell_off()},
            {"objects", objects}};
  j["contact_loss_time"] = result.contact_loss_time ? json(*result.contact_loss_time) : json(nullptr);
  j["contact_loss_object"] = result.contact_loss_object ? json(*result.contact_loss_object) : json(nullptr);
  return j;
}

json to_json(const SlidingEvent& event) {
  return {{"t_sliding", event.t_sliding},
          {"v_sliding_mag", event.v_sliding_mag},
          {"a_sliding_mag", event.a_sliding_mag}};
}

SlidingEvent sliding_event_from_json(const json& j) {
  try {
    return {j.at("t_sliding").get<double>(), j.at("v_sliding_mag").get<double>(),
            j.at("a_sliding_mag").get<double>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sliding event: ") + e.what());
  }
}

std::string events_to_jsonl(const std::vector<SlidingEvent>& events) {
  std::string out;
  for (const auto& e : events) out += to_json(e).dump() + "\n";
  return out;
}

std::vector<SlidingEvent> events_from_jsonl(const std::string& text) {
  std::vector<SlidingEvent> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sliding_event_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed event line: ") + e.what());
    }
  }
  return out;
}

ObjectSpec object_from_json(const json& j) {
  ObjectSpec o;
  o.mass = j.value("mass", o.mass);
  if (j.contains("offset")) o.centroid_offset = vec3(j["offset"]);
  o.mu_s = j.value("mu_s", o.mu_s);
  o.validate();
  return o;
}

std::vector<ObjectSpec> objects_from_json(const json& j) {
  std::vector<ObjectSpec> out;
  if (j.contains("ring")) {
    const json& r = j["ring"];
    const int count = r.at("count").get<int>();
    const double radius = r.value("radius", 0.05);
    if (count < 1) throw ConfigError("ring count must be >= 1");
    ObjectSpec base;
    base.mass = r.value("mass", base.mass);
    base.mu_s = r.value("mu_s", base.mu_s);
    for (int k = 0; k < count; ++k) {
      ObjectSpec o = base;
      const double phi = 2.0 * M_PI * k / count;
      o.centroid_offset = count == 1 ? Eigen::Vector3d::Zero()
                                     : Eigen::Vector3d(radius * std::cos(phi), radius * std::sin(phi), 0.0);
      o.validate();
      out.push_back(o);
    }
  } else if (j.contains("objects")) {
    for (const auto& o : j["objects"]) out.push_back(object_from_json(o));
  } else {
    out.push_back(ObjectSpec{});
  }
  return out;
}

AlphaPtr alpha_from_json(const json& j, const fs::path& base_dir) {
  if (j.is_null()) return nullptr;
  const std::string type = j.value("type", "");
  if (type == "constant") return std::make_shared<ConstantAlpha>(j.at("value").get<double>());
  if (type == "clamped_linear") {
    return std::make_shared<ClampedLinearAlpha>(j.value("intercept", 1.0), j.at("rate").get<double>(),
                                                j.value("floor", 0.0));
  }
  if (type == "model") {
    return std::make_shared<AlphaModel>(load_model(resolve(base_dir, j.at("path").get<std::string>())));
  }
  throw ConfigError("unknown alpha type '" + type + "'");
}

FrictionSpec friction_from_json(const json& j, const fs::path& base_dir) {
  const std::string type = j.value("type", "coulomb");
  FrictionSpec f;
  if (type == "none") {
    f = FrictionSpec::none();
  } else if (type == "coulomb") {
    f = FrictionSpec::coulomb();
  } else if (type == "learned") {
    f.type = FrictionType::Learned;
    if (j.contains("model")) {
      f.model_path = resolve(base_dir, j["model"].get<std::string>()).string();
      f.alpha_model = std::make_shared<AlphaModel>(load_model(f.model_path));
    } else if (j.contains("alpha")) {
      f.alpha_model = alpha_from_json(j["alpha"], base_dir);
    } else {
      throw ConfigError("learned friction needs a \"model\" path or an \"alpha\" function");
    }
  } else {
    throw ConfigError("unknown friction type '" + type + "'");
  }
  if (j.contains("mu_s") && !j["mu_s"].is_null()) f.mu_s = j["mu_s"].get<double>();
  f.alpha_floor = j.value("alpha_floor", f.alpha_floor);
  f.alpha_ceiling = j.value("alpha_ceiling", f.alpha_ceiling);
  f.validate();
  return f;
}

GroundTruthFriction ground_truth_from_json(const json& j, const fs::path& base_dir) {
  GroundTruthFriction g;
  g.mu_s_true = j.value("mu_s_true", g.mu_s_true);
  g.kinetic_ratio = j.value("kinetic_ratio", g.kinetic_ratio);
  if (j.contains("alpha_star")) g.alpha_star = alpha_from_json(j["alpha_star"], base_dir);
  g.validate();
  return g;
}

SimSettings sim_settings_from_json(const json& j) {
  SimSettings s;
  s.tray_radius = j.value("tray_radius", s.tray_radius);
  s.sim_dt = j.value("sim_dt", s.sim_dt);
  s.stick_speed = j.value("stick_speed", s.stick_speed);
  s.settle_time = j.value("settle_time", s.settle_time);
  s.record_timeline = j.value("record_timeline", s.record_timeline);
  return s;
}

SynthParams synth_params_from_json(const json& j) {
  SynthParams p;
  p.sample_rate = j.value("sample_rate", p.sample_rate);
  p.gain_vibration = j.value("gain_vibration", p.gain_vibration);
  p.gain_slip = j.value("gain_slip", p.gain_slip);
  p.slip_speed_ref = j.value("slip_speed_ref", p.slip_speed_ref);
  p.sensor_noise = j.value("sensor_noise", p.sensor_noise);
  p.vibration_low = j.value("vibration_low", p.vibration_low);
  p.vibration_high = j.value("vibration_high", p.vibration_high);
  p.burst_low = j.value("burst_low", p.burst_low);
  p.burst_high = j.value("burst_high", p.burst_high);
  p.tail = j.value("tail", p.tail);
  p.seed = j.value("seed", p.seed);
  return p;
}

PlannerSettings planner_settings_from_json(const json& j) {
  PlannerSettings s;
  s.max_sqp_iterations = j.value("max_sqp_iterations", s.max_sqp_iterations);
  s.penalty_initial = j.value("penalty_initial", s.penalty_initial);
  s.penalty_max = j.value("penalty_max", s.penalty_max);
  s.penalty_growth = j.value("penalty_growth", s.penalty_growth);
  s.trust_initial = j.value("trust_initial", s.trust_initial);
  s.trust_shrink = j.value("trust_shrink", s.trust_shrink);
  s.trust_grow = j.value("trust_grow", s.trust_grow);
  s.trust_min = j.value("trust_min", s.trust_min);
  s.trust_max = j.value("trust_max", s.trust_max);
  s.trust_derivative_scale = j.value("trust_derivative_scale", s.trust_derivative_scale);
  s.accept_ratio = j.value("accept_ratio", s.accept_ratio);
  s.convergence_tolerance = j.value("convergence_tolerance", s.convergence_tolerance);
  s.margin_tolerance = j.value("margin_tolerance", s.margin_tolerance);
  s.margin_backoff = j.value("margin_backoff", s.margin_backoff);
  s.contact_epsilon = j.value("contact_epsilon", s.contact_epsilon);
  s.segment_substeps = j.value("segment_substeps", s.segment_substeps);
  s.t_max = j.value("t_max", s.t_max);
  return s;
}

namespace {

Pose endpoint_pose(const json& j) {
  if (j.is_array()) {
    const Eigen::Vector3d p = vec3(j);
    return Pose::level(p, std::atan2(p.y(), p.x()));
  }
  const Eigen::Vector3d p = vec3(j.at("position"));
  return Pose::level(p, j.value("yaw", std::atan2(p.y(), p.x())));
}

}  // namespace

PlanRequest plan_request_from_json(const json& j, const fs::path& base_dir) {
  try {
    PlanRequest r;
    const fs::path robot = j.contains("robot") ? resolve(base_dir, j["robot"].get<std::string>())
                                               : fs::path(TRAY_CONFIG_DIR) / "ur5e_tray.json";
    r.model = load_robot_model(robot.string());
    r.g_start = endpoint_pose(j.at("start"));
    r.g_goal = endpoint_pose(j.at("goal"));
    if (j.contains("seed_start")) r.seed_start = vecx(j["seed_start"]);
    if (j.contains("seed_goal")) r.seed_goal = vecx(j["seed_goal"]);
    r.objects = objects_from_json(j);
    r.friction = j.contains("friction") ? friction_from_json(j["friction"], base_dir) : FrictionSpec::coulomb();
    r.horizon = j.value("horizon", r.horizon);
    r.t_step_init = j.value("t_step_init", r.t_step_init);
    r.t_step_resolution = j.value("t_step_resolution", r.t_step_resolution);
    if (j.contains("t_step_floor")) r.t_step_floor = j["t_step_floor"].get<double>();
    if (j.contains("settings")) r.settings = planner_settings_from_json(j["settings"]);
    r.validate();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed plan request: ") + e.what());
  }
}

}  // namespace tray::io
