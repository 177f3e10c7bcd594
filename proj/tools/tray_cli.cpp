// Command-line front end: thin wrappers over the library plus the evaluate
// and pipeline workflows.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tray/acoustic.hpp"
#include "tray/errors.hpp"
#include "tray/evaluate.hpp"
#include "tray/io.hpp"
#include "tray/learning.hpp"
#include "tray/pipeline.hpp"
#include "tray/planner.hpp"
#include "tray/profiles.hpp"
#include "tray/simulator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tray;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
  } else {
    io::write_text_file(out_path, text);
  }
}

fs::path dir_of(const fs::path& p) { return fs::absolute(p).parent_path(); }

// Accepts a bare trajectory or any document with a "trajectory" member (plan results).
Trajectory load_trajectory(const fs::path& path) {
  const json j = io::read_json_file(path);
  return io::trajectory_from_json(j.contains("trajectory") ? j["trajectory"] : j);
}

RobotModel robot_for(const json& cfg, const fs::path& base) {
  return load_robot_model(cfg.contains("robot") ? io::resolve(base, cfg["robot"].get<std::string>()).string()
                                                : std::string(TRAY_CONFIG_DIR "/ur5e_tray.json"));
}

MotionProfile profile_for(const fs::path& trajectory_path, const RobotModel& model) {
  const json j = io::read_json_file(trajectory_path);
  const Trajectory traj = io::trajectory_from_json(j.contains("trajectory") ? j["trajectory"] : j);
  if (j.contains("profile")) {
    const json& p = j["profile"];
    const ScurveProfile s = scurve_plan(p.at("distance").get<double>(), p.at("a_max").get<double>(),
                                        p.at("j_max").get<double>());
    return motion_profile(s, traj.t_step, traj.duration());
  }
  return motion_profile(model, traj);
}

int fail(const std::exception& e, const char* kind) {
  json err = {{"error", kind}, {"message", e.what()}};
  if (const auto* stage = dynamic_cast<const StageError*>(&e)) err["stage"] = stage->stage();
  std::cerr << err.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-optimal tray transport planning and friction-constraint learning"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  int jobs = 1;
  app.add_option("--seed", seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--jobs", jobs, "Concurrent workers")->capture_default_str()->check(CLI::PositiveNumber);

  // plan
  auto* plan = app.add_subcommand("plan", "Time-optimal plan for a request file");
  std::string plan_request, plan_out;
  plan->add_option("request", plan_request, "Plan request JSON")->required()->check(CLI::ExistingFile);
  plan->add_option("-o,--out", plan_out, "Result JSON (default stdout)");

  // tilt-test
  auto* tilt = app.add_subcommand("tilt-test", "Virtual tilt measurement of mu_s");
  double tilt_mu = 0.21, tilt_inc = 0.01;
  tilt->add_option("--mu", tilt_mu, "True static coefficient")->required();
  tilt->add_option("--increment", tilt_inc, "Tilt increment, rad")->capture_default_str();

  // gen-profiles
  auto* gen = app.add_subcommand("gen-profiles", "Joint trajectories over the acceleration/jerk grid");
  std::string gen_config, gen_out;
  gen->add_option("config", gen_config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gen_out, "Output directory")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "Stick-slip simulation of a trajectory");
  std::string sim_traj, sim_config, sim_out;
  sim->add_option("trajectory", sim_traj, "Trajectory or plan result JSON")->required()->check(CLI::ExistingFile);
  sim->add_option("-c,--config", sim_config, "Objects, ground truth and sim settings")->required()->check(CLI::ExistingFile);
  sim->add_option("-o,--out", sim_out, "SimResult JSON (default stdout)");

  // synth-audio
  auto* synth = app.add_subcommand("synth-audio", "Simulate and render the contact-microphone signal");
  std::string synth_traj, synth_config, synth_out;
  bool synth_empty = false;
  synth->add_option("trajectory", synth_traj, "Trajectory JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("-c,--config", synth_config, "Objects, ground truth, sim and synth settings")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--out", synth_out, "WAV path")->required();
  synth->add_flag("--no-object", synth_empty, "Record without the object on the tray");

  // detect
  auto* det = app.add_subcommand("detect", "Sliding onset from paired with/without recordings");
  std::string det_traj, det_out, det_robot;
  std::vector<std::string> det_with, det_without;
  det->add_option("trajectory", det_traj, "Trajectory JSON the recordings follow")->required()->check(CLI::ExistingFile);
  det->add_option("--with", det_with, "WAV files with the object")->required()->check(CLI::ExistingFile);
  det->add_option("--without", det_without, "WAV files without the object")->required()->check(CLI::ExistingFile);
  det->add_option("--robot", det_robot, "Robot model JSON")->check(CLI::ExistingFile);
  det->add_option("-o,--out", det_out, "Event JSON lines (default stdout)");

  // train-alpha
  auto* train = app.add_subcommand("train-alpha", "Fit the alpha model to sliding events");
  std::string train_events, train_out, train_report;
  double train_mu = 0.0;
  TrainSettings train_settings;
  double train_dv = 0.02;
  train->add_option("events", train_events, "Event JSON lines")->required()->check(CLI::ExistingFile);
  train->add_option("--mu", train_mu, "Measured static coefficient")->required();
  train->add_option("-o,--out", train_out, "Model JSON")->required();
  train->add_option("--report", train_report, "Fit report JSON (default stdout)");
  train->add_option("--epochs", train_settings.epochs)->capture_default_str();
  train->add_option("--hidden", train_settings.hidden)->capture_default_str();
  train->add_option("--lr", train_settings.learning_rate)->capture_default_str();
  train->add_option("--dropout", train_settings.dropout)->capture_default_str();
  train->add_option("--dv", train_dv, "Augmentation spacing, m/s")->capture_default_str();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Plan, simulate and compare friction models");
  std::string eval_config, eval_out;
  std::vector<std::string> eval_models;
  eval->add_option("config", eval_config, "Evaluation config JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("-o,--out", eval_out, "Directory for report.csv and report.txt");
  eval->add_option("--model", eval_models, "Override learned models as name=path");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Profiles -> audio -> detection -> alpha model");
  std::string pipe_config, pipe_dir;
  pipe->add_option("config", pipe_config, "Pipeline config JSON")->required()->check(CLI::ExistingFile);
  pipe->add_option("-o,--run-dir", pipe_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  try {
    if (*plan) {
      const PlanRequest request = io::plan_request_from_json(io::read_json_file(plan_request), dir_of(plan_request));
      const PlanResult result = plan_time_optimal(request);
      emit(plan_out, io::to_json(result).dump(2) + "\n");
      return result.status == PlanStatus::Optimal ? 0 : 3;
    }
    if (*tilt) {
      const double angle = virtual_tilt(tilt_mu, tilt_inc);
      std::cout << json{{"mu_true", tilt_mu}, {"angle", angle}, {"mu_s", virtual_tilt_test(tilt_mu, tilt_inc)}}.dump()
                << std::endl;
      return 0;
    }
    if (*gen) {
      const PipelineConfig cfg = pipeline_config_from_json(io::read_json_file(gen_config), dir_of(gen_config));
      if (cfg.grid.acc.empty() || cfg.grid.jerk.empty()) throw EmptyGrid("acceleration/jerk grid is empty");
      const double distance = (cfg.end - cfg.start).norm();
      LineOptions line;
      line.control_dt = cfg.control_dt;
      line.seed = cfg.seed;
      for (double a : cfg.grid.acc) {
        for (double j : cfg.grid.jerk) {
          const ScurveProfile profile = scurve_plan(distance, a, j);
          json doc = io::to_json(line_to_joint_trajectory(cfg.model, cfg.start, cfg.end, profile, line));
          doc["profile"] = {{"distance", distance}, {"a_max", a}, {"j_max", j}, {"total_time", profile.total_time}};
          char name[64];
          std::snprintf(name, sizeof name, "a%.3f_j%.3f.json", a, j);
          io::write_text_file(fs::path(gen_out) / name, doc.dump() + "\n");
        }
      }
      return 0;
    }
    if (*sim || *synth) {
      const std::string& cfg_path = *sim ? sim_config : synth_config;
      const json cfg = io::read_json_file(cfg_path);
      const fs::path base = dir_of(cfg_path);
      const RobotModel model = robot_for(cfg, base);
      const Trajectory traj = load_trajectory(*sim ? sim_traj : synth_traj);
      std::vector<ObjectSpec> objects = io::objects_from_json(cfg);
      if (*synth && synth_empty) objects.clear();
      const GroundTruthFriction truth = io::ground_truth_from_json(cfg.value("ground_truth", json::object()), base);
      SimSettings settings = io::sim_settings_from_json(cfg.value("sim", json::object()));
      settings.sim_dt = std::min(settings.sim_dt, traj.t_step / 10.0);
      const SimResult result = simulate_transport(model, traj, objects, truth, settings);
      if (*sim) {
        emit(sim_out, io::to_json(result).dump(2) + "\n");
      } else {
        SynthParams params = io::synth_params_from_json(cfg.value("synth", json::object()));
        params.seed ^= seed;
        write_wav(synth_out, synth_audio(result, model, traj, params));
      }
      return 0;
    }
    if (*det) {
      const RobotModel model = load_robot_model(det_robot.empty() ? std::string(TRAY_CONFIG_DIR "/ur5e_tray.json") : det_robot);
      std::vector<AudioClip> with, without;
      for (const auto& p : det_with) with.push_back(read_wav(p));
      for (const auto& p : det_without) without.push_back(read_wav(p));
      const PairedTrials paired = pair_trials(with, without, profile_for(det_traj, model));
      emit(det_out, io::events_to_jsonl(paired.unique_events));
      return 0;
    }
    if (*train) {
      const auto events = io::events_from_jsonl(read_text(train_events));
      const auto samples = events_to_samples(events, train_mu);
      if (samples.empty()) throw InvalidArgument("no events to train on");
      const auto augmented = augment_dataset(samples, train_mu, train_dv);
      train_settings.seed = seed;
      const AlphaModel model = train_alpha(augmented, train_settings);
      save_model(model, train_out);
      const FitReport fit = fit_report(model, augmented);
      emit(train_report, json{{"mae", fit.mae},
                              {"monotone_nonincreasing", fit.monotone_nonincreasing},
                              {"velocity_range", {fit.v_min, fit.v_max}},
                              {"final_loss", model.training.final_loss},
                              {"samples", augmented.size()}}
                             .dump(2) + "\n");
      return 0;
    }
    if (*eval) {
      json cfg = io::read_json_file(eval_config);
      if (!eval_models.empty()) {
        cfg["learned"] = json::array();
        for (const auto& m : eval_models) {
          const auto eq = m.find('=');
          if (eq == std::string::npos) throw ConfigError("--model expects name=path, got " + m);
          cfg["learned"].push_back({{"name", m.substr(0, eq)}, {"model", fs::absolute(m.substr(eq + 1)).string()}});
        }
      }
      const EvalConfig config = eval_config_from_json(cfg, dir_of(eval_config));
      const EvalReport report = run_evaluation(config, jobs);
      std::cout << report.to_text();
      if (!eval_out.empty()) {
        io::write_text_file(fs::path(eval_out) / "report.csv", report.to_csv());
        io::write_text_file(fs::path(eval_out) / "report.txt", report.to_text());
      }
      return 0;
    }
    if (*pipe) {
      const json cfg = io::read_json_file(pipe_config);
      const PipelineConfig config = pipeline_config_from_json(cfg, dir_of(pipe_config));
      fs::create_directories(pipe_dir);
      io::write_text_file(fs::path(pipe_dir) / "config.json", cfg.dump(2) + "\n");
      const PipelineResult r = run_pipeline(config, pipe_dir, seed, jobs);
      json summary = {{"model", (fs::path(pipe_dir) / "model.json").string()},
                      {"mu_s", r.mu_s},
                      {"unique_events", r.events.size()},
                      {"fit_mae", r.fit.mae},
                      {"localized_fraction", r.detection.localized_fraction()},
                      {"seconds", r.seconds}};
      summary["mae_vs_truth"] = r.mae_vs_truth ? json(*r.mae_vs_truth) : json(nullptr);
      std::cout << summary.dump(2) << std::endl;
      return 0;
    }
  } catch (const Error& e) {
    return fail(e, e.kind());
  } catch (const std::exception& e) {
    return fail(e, "InternalError");
  }
  return 0;
}
