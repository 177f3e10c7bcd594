#include "tray/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>

#include "tray/errors.hpp"
#include "tray/evaluate.hpp"
#include "tray/io.hpp"

namespace tray {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) return {};
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (int i = 0; i < count; ++i) out[i] = lo + (hi - lo) * i / (count - 1);
  return out;
}

namespace {

std::vector<double> grid_axis(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return linspace(j.at("min").get<double>(), j.at("max").get<double>(), j.at("count").get<int>());
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t point, int trial, bool with_object) {
  return splitmix(splitmix(splitmix(seed) ^ point) ^ (2 * static_cast<std::uint64_t>(trial) + with_object));
}

std::string point_tag(double a, double j) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "a%.3f_j%.3f", a, j);
  return buf;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const EmptyGrid&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct ManifestEntry {
  std::string stage;
  std::vector<std::string> inputs;
  std::vector<fs::path> outputs;
};

}  // namespace

std::string sha256_file_hex(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (f) {
    f.read(buf, sizeof buf);
    if (f.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(f.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  try {
    PipelineConfig c;
    const fs::path robot = j.contains("robot") ? io::resolve(base_dir, j["robot"].get<std::string>())
                                               : fs::path(TRAY_CONFIG_DIR) / "ur5e_tray.json";
    c.model = load_robot_model(robot.string());
    if (j.contains("segment")) {
      const json& s = j["segment"];
      if (s.contains("start")) c.start = io::vec3(s["start"]);
      if (s.contains("end")) c.end = io::vec3(s["end"]);
      if (s.contains("seed")) c.seed = io::vecx(s["seed"]);
    }
    if (j.contains("grid")) {
      c.grid.acc = grid_axis(j["grid"].at("acc"));
      c.grid.jerk = grid_axis(j["grid"].at("jerk"));
    }
    c.control_dt = j.value("control_dt", c.control_dt);
    if (j.contains("trials")) {
      c.trials_with = j["trials"].value("with_object", c.trials_with);
      c.trials_without = j["trials"].value("without_object", c.trials_without);
    }
    if (j.contains("object")) c.object = io::object_from_json(j["object"]);
    c.ground_truth = io::ground_truth_from_json(j.value("ground_truth", json::object()), base_dir);
    if (j.contains("mu_s") && j["mu_s"].is_number()) c.mu_s = j["mu_s"].get<double>();
    c.tilt_increment = j.value("tilt_increment", c.tilt_increment);
    c.sim = io::sim_settings_from_json(j.value("sim", json::object()));
    c.synth = io::synth_params_from_json(j.value("synth", json::object()));
    if (j.contains("detection")) {
      const json& d = j["detection"];
      c.detection.time_bin = d.value("time_bin", c.control_dt);
      c.detection.freq_bin = d.value("freq_bin", c.detection.freq_bin);
      if (d.contains("gate")) {
        c.detection.gate.half_width = d["gate"].value("half_width", c.detection.gate.half_width);
        c.detection.gate.n_std = d["gate"].value("n_std", c.detection.gate.n_std);
      }
      if (d.contains("onset")) {
        c.detection.onset.k = d["onset"].value("k", c.detection.onset.k);
        c.detection.onset.window = d["onset"].value("window", c.detection.onset.window);
        c.detection.onset.floor_factor = d["onset"].value("floor_factor", c.detection.onset.floor_factor);
      }
    } else {
      c.detection.time_bin = c.control_dt;
    }
    c.augment_dv = j.value("augment_dv", c.augment_dv);
    if (j.contains("training")) {
      const json& t = j["training"];
      c.training.hidden = t.value("hidden", c.training.hidden);
      c.training.epochs = t.value("epochs", c.training.epochs);
      c.training.learning_rate = t.value("learning_rate", c.training.learning_rate);
      c.training.dropout = t.value("dropout", c.training.dropout);
      c.training.batch_size = t.value("batch_size", c.training.batch_size);
      c.training.negative_slope = t.value("negative_slope", c.training.negative_slope);
      c.training.loss_ceiling = t.value("loss_ceiling", c.training.loss_ceiling);
    }
    c.write_audio = j.value("write_audio", c.write_audio);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed pipeline config: ") + e.what());
  }
}

MotionProfile motion_profile(const ScurveProfile& profile, double dt, double duration) {
  MotionProfile m;
  const int steps = static_cast<int>(std::llround(duration / dt));
  for (int i = 0; i <= steps; ++i) {
    const double t = i * dt;
    const ProfileSample s = sample_profile(profile, std::min(t, profile.total_time));
    m.t.push_back(t);
    m.v_mag.push_back(std::abs(s.vel));
    m.a_mag.push_back(std::abs(s.acc));
  }
  return m;
}

MotionProfile motion_profile(const RobotModel& model, const Trajectory& trajectory) {
  MotionProfile m;
  for (int i = 0; i <= trajectory.horizon(); ++i) {
    const JointState& s = trajectory.points[i];
    m.t.push_back(i * trajectory.t_step);
    m.v_mag.push_back(ee_linear_velocity(model, s.q, s.qd).norm());
    m.a_mag.push_back((centroid_acceleration(model, s, Eigen::Vector3d::Zero()) + model.gravity).norm());
  }
  return m;
}

PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& run_dir, std::uint64_t seed,
                            int jobs) {
  const auto clock_start = std::chrono::steady_clock::now();
  if (config.grid.acc.empty() || config.grid.jerk.empty()) throw EmptyGrid("acceleration/jerk grid is empty");
  if (config.trials_with < 1 || config.trials_without < 1) {
    throw InvalidArgument("pipeline needs at least one trial with and without the object");
  }
  const bool artifacts = !run_dir.empty();
  std::vector<ManifestEntry> manifest;

  struct Point {
    double a, j;
    ScurveProfile profile;
    Trajectory trajectory;
  };
  std::vector<Point> points;
  const double distance = (config.end - config.start).norm();

  // gen-profiles
  stage("gen-profiles", [&] {
    for (double a : config.grid.acc) {
      for (double j : config.grid.jerk) points.push_back({a, j, scurve_plan(distance, a, j), {}});
    }
    LineOptions line;
    line.control_dt = config.control_dt;
    line.seed = config.seed;
    parallel_for(static_cast<int>(points.size()), jobs, [&](int i) {
      points[i].trajectory =
          line_to_joint_trajectory(config.model, config.start, config.end, points[i].profile, line);
    });
    if (artifacts) {
      ManifestEntry entry{"gen-profiles", {}, {}};
      for (const auto& p : points) {
        const fs::path path = run_dir / "profiles" / (point_tag(p.a, p.j) + ".json");
        json j = io::to_json(p.trajectory);
        j["profile"] = {{"distance", p.profile.distance}, {"a_max", p.a}, {"j_max", p.j},
                        {"total_time", p.profile.total_time},
                        {"phase_durations", p.profile.phase_durations}};
        io::write_text_file(path, j.dump() + "\n");
        entry.outputs.push_back(path);
      }
      manifest.push_back(entry);
    }
    return 0;
  });

  PipelineResult result;
  result.mu_s = config.mu_s.value_or(virtual_tilt_test(config.ground_truth.mu_s_true, config.tilt_increment));
  result.grid.resize(points.size());

  // simulate + synth-audio + detect, per grid point
  std::vector<std::exception_ptr> errors(points.size());
  std::vector<std::vector<fs::path>> audio_paths(points.size()), sim_paths(points.size());
  stage("simulate", [&] {
    parallel_for(static_cast<int>(points.size()), jobs, [&](int i) {
      try {
        const Point& p = points[i];
        GridPointOutcome& out = result.grid[i];
        out.a_max = p.a;
        out.j_max = p.j;
        out.duration = p.trajectory.duration();
        SimSettings sim = config.sim;
        sim.record_timeline = true;
        sim.sim_dt = std::min(sim.sim_dt, p.trajectory.t_step / 10.0);
        const SimResult with = simulate_transport(config.model, p.trajectory, {config.object},
                                                  config.ground_truth, sim);
        const SimResult without = simulate_transport(config.model, p.trajectory, {}, config.ground_truth, sim);
        out.true_slip_time = with.first_slip_time();
        if (artifacts) {
          const fs::path path = run_dir / "sim" / (point_tag(p.a, p.j) + ".json");
          io::write_text_file(path, io::to_json(with).dump() + "\n");
          sim_paths[i].push_back(path);
        }

        std::vector<AudioClip> with_clips, without_clips;
        for (int k = 0; k < config.trials_with + config.trials_without; ++k) {
          const bool has_object = k < config.trials_with;
          const int trial = has_object ? k : k - config.trials_with;
          SynthParams synth = config.synth;
          synth.seed = trial_seed(seed ^ config.synth.seed, i, trial, has_object);
          AudioClip clip = quantize_pcm16(synth_audio(has_object ? with : without, config.model, p.trajectory, synth));
          if (artifacts && config.write_audio) {
            const fs::path path = run_dir / "audio" /
                                  (point_tag(p.a, p.j) + (has_object ? "_with_" : "_without_") +
                                   std::to_string(trial) + ".wav");
            fs::create_directories(path.parent_path());
            write_wav(path.string(), clip);
            audio_paths[i].push_back(path);
          }
          (has_object ? with_clips : without_clips).push_back(std::move(clip));
        }
        const MotionProfile profile = motion_profile(p.profile, p.trajectory.t_step, p.trajectory.duration());
        out.t_max_velocity = profile.time_of_max_velocity();
        const PairedTrials paired = pair_trials(with_clips, without_clips, profile, config.detection);
        out.detections = paired.per_trial;
        out.unique_events = paired.unique_events;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return 0;
  });
  if (artifacts) {
    ManifestEntry sim_entry{"simulate", {"profiles"}, {}};
    ManifestEntry audio_entry{"synth-audio", {"profiles", "sim"}, {}};
    for (std::size_t i = 0; i < points.size(); ++i) {
      sim_entry.outputs.insert(sim_entry.outputs.end(), sim_paths[i].begin(), sim_paths[i].end());
      audio_entry.outputs.insert(audio_entry.outputs.end(), audio_paths[i].begin(), audio_paths[i].end());
    }
    manifest.push_back(sim_entry);
    if (config.write_audio) manifest.push_back(audio_entry);
  }

  // detect: global dedup and detection statistics
  stage("detect", [&] {
    std::set<std::pair<double, double>> seen;
    for (const auto& g : result.grid) {
      for (const auto& e : g.unique_events) {
        if (seen.emplace(e.v_sliding_mag, e.a_sliding_mag).second) result.events.push_back(e);
      }
      for (const auto& d : g.detections) {
        const bool slipped = g.true_slip_time.has_value();
        const bool detectable = slipped && *g.true_slip_time <= g.t_max_velocity;
        result.detection.sliding_trials += slipped;
        result.detection.detectable_trials += detectable;
        if (d && detectable &&
            std::abs(d->t_sliding - *g.true_slip_time) <= config.detection.time_bin + 1e-9) {
          ++result.detection.localized;
        }
        if (d && !detectable) ++result.detection.false_positives;
      }
    }
    if (artifacts) {
      const fs::path path = run_dir / "events.jsonl";
      io::write_text_file(path, io::events_to_jsonl(result.events));
      manifest.push_back({"detect", {"audio", "profiles"}, {path}});
    }
    return 0;
  });

  // train-alpha
  stage("train-alpha", [&] {
    result.samples = events_to_samples(result.events, result.mu_s);
    if (result.samples.empty()) throw NonConvergence("no sliding events were detected");
    result.augmented = augment_dataset(result.samples, result.mu_s, config.augment_dv);
    TrainSettings training = config.training;
    training.seed = seed;
    result.model = train_alpha(result.augmented, training);
    result.fit = fit_report(result.model, result.augmented);
    if (config.ground_truth.alpha_star) {
      double vmax = 0.0;
      for (const auto& e : result.events) vmax = std::max(vmax, e.v_sliding_mag);
      constexpr int kGrid = 200;
      double total = 0.0;
      for (int i = 0; i <= kGrid; ++i) {
        const double v = vmax * i / kGrid;
        total += std::abs(result.model.value(v) - config.ground_truth.alpha_at(v));
      }
      result.mae_vs_truth = total / (kGrid + 1);
    }
    if (artifacts) {
      const fs::path model_path = run_dir / "model.json";
      save_model(result.model, model_path.string());
      std::string csv = "v,alpha,source\n";
      char line[96];
      for (std::size_t i = 0; i < result.augmented.size(); ++i) {
        const bool original = i + result.samples.size() >= result.augmented.size();
        std::snprintf(line, sizeof line, "%.17g,%.17g,%s\n", result.augmented[i].v, result.augmented[i].alpha,
                      original ? "event" : "augmented");
        csv += line;
      }
      const fs::path samples_path = run_dir / "samples.csv";
      io::write_text_file(samples_path, csv);
      manifest.push_back({"train-alpha", {"events.jsonl"}, {samples_path, model_path}});
    }
    return 0;
  });

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();

  if (artifacts) {
    json report = {{"mu_s", result.mu_s},
                   {"grid_points", result.grid.size()},
                   {"unique_events", result.events.size()},
                   {"training_samples", result.augmented.size()},
                   {"final_loss", result.model.training.final_loss},
                   {"fit_mae", result.fit.mae},
                   {"monotone_nonincreasing", result.fit.monotone_nonincreasing},
                   {"velocity_range", {result.fit.v_min, result.fit.v_max}},
                   {"detection",
                    {{"sliding_trials", result.detection.sliding_trials},
                     {"detectable_trials", result.detection.detectable_trials},
                     {"localized_within_one_bin", result.detection.localized},
                     {"false_positives", result.detection.false_positives}}}};
    report["mae_vs_truth"] = result.mae_vs_truth ? json(*result.mae_vs_truth) : json(nullptr);
    io::write_text_file(run_dir / "report.json", report.dump(2) + "\n");

    json stages = json::array();
    for (const auto& m : manifest) {
      json outputs = json::array();
      for (const auto& p : m.outputs) {
        outputs.push_back({{"path", fs::relative(p, run_dir).generic_string()},
                           {"sha256", sha256_file_hex(p)},
                           {"bytes", fs::file_size(p)}});
      }
      stages.push_back({{"stage", m.stage}, {"inputs", m.inputs}, {"outputs", outputs}});
    }
    const json manifest_json = {{"seed", seed}, {"stages", stages}};
    io::write_text_file(run_dir / "manifest.json", manifest_json.dump(2) + "\n");
  }
  return result;
}

}  // namespace tray
