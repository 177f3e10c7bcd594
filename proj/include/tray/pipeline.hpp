#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tray/acoustic.hpp"
#include "tray/learning.hpp"
#include "tray/profiles.hpp"
#include "tray/simulator.hpp"

namespace tray {

struct LimitGrid {
  std::vector<double> acc;   // m/s^2
  std::vector<double> jerk;  // m/s^3
};

// Evenly spaced values, endpoints included.
std::vector<double> linspace(double lo, double hi, int count);

struct PipelineConfig {
  RobotModel model;
  Eigen::Vector3d start{0.20, 0.60, 0.20};
  Eigen::Vector3d end{-0.30, 0.60, 0.20};
  Eigen::VectorXd seed;  // IK seed at `start`
  LimitGrid grid;
  double control_dt = 0.002;
  int trials_with = 5;
  int trials_without = 5;
  ObjectSpec object;
  GroundTruthFriction ground_truth;
  std::optional<double> mu_s;  // unset: virtual tilt test
  double tilt_increment = 0.01;
  SimSettings sim;
  SynthParams synth;
  TrialOptions detection;
  double augment_dv = 0.02;
  TrainSettings training;
  bool write_audio = true;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct GridPointOutcome {
  double a_max = 0.0;
  double j_max = 0.0;
  double duration = 0.0;
  double t_max_velocity = 0.0;
  std::optional<double> true_slip_time;  // simulator ground truth
  std::vector<std::optional<SlidingEvent>> detections;
  std::vector<SlidingEvent> unique_events;
};

struct DetectionStats {
  int sliding_trials = 0;     // trials whose object slipped at all
  int detectable_trials = 0;  // slipped before the velocity peak
  int localized = 0;          // detectable and within one time bin
  int false_positives = 0;    // detections on trials without slip
  double localized_fraction() const {
    return detectable_trials ? static_cast<double>(localized) / detectable_trials : 0.0;
  }
};

struct PipelineResult {
  double mu_s = 0.0;
  std::vector<GridPointOutcome> grid;
  std::vector<SlidingEvent> events;  // unique over the whole grid
  std::vector<AlphaSample> samples;
  std::vector<AlphaSample> augmented;
  AlphaModel model;
  FitReport fit;
  DetectionStats detection;
  std::optional<double> mae_vs_truth;  // over [0, max event speed]
  double seconds = 0.0;
};

// gen-profiles -> simulate + synth-audio -> detect -> train-alpha. With a
// non-empty run_dir every stage writes its artifacts there along with a
// manifest of SHA-256 hashes. All randomness derives from `seed`. Stage
// failures raise StageError; an empty grid raises EmptyGrid.
PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& run_dir,
                            std::uint64_t seed = 0, int jobs = 1);

// Uniform sampling of the tray speed and acceleration magnitude from a profile.
MotionProfile motion_profile(const ScurveProfile& profile, double dt, double duration);

// Same series measured from a joint trajectory: |ee velocity| and the
// magnitude of the tray origin's acceleration (gravity excluded).
MotionProfile motion_profile(const RobotModel& model, const Trajectory& trajectory);

std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace tray
