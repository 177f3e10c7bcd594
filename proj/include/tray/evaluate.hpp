#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tray/planner.hpp"
#include "tray/simulator.hpp"

namespace tray {

struct EvalScenario {
  std::string name;
  std::vector<ObjectSpec> objects;
};

struct NamedAlpha {
  std::string name;
  AlphaPtr alpha;
};

struct EvalConfig {
  PlanRequest base;  // robot, endpoints, seeds, horizon and solver settings
  double plan_mu_s = 0.21;
  std::vector<EvalScenario> scenarios;
  std::vector<NamedAlpha> learned;
  GroundTruthFriction ground_truth;
  SimSettings sim;
  bool ablations = true;
};

// "mu_s" may be a number or "tilt" (virtual tilt test against the ground
// truth with "tilt_increment").
EvalConfig eval_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct EvalRow {
  std::string scenario;
  std::string model;  // unconstrained, coulomb, learned names, as-none, as-coulomb
  std::optional<PlanStatus> plan_status;
  double duration = 0.0;
  double plan_seconds = 0.0;
  std::optional<SimStatus> sim_status;
  double mean_displacement_mm = 0.0;
  bool fell_off = false;
  std::string error;
  std::optional<PlanResult> plan;

  // Planned and simulated without error.
  bool succeeded() const { return error.empty() && plan_status == PlanStatus::Optimal && sim_status; }
};

struct Reduction {
  std::string scenario;
  std::string model;
  double percent = 0.0;  // 100 (1 - d_model / d_coulomb)
};

struct EvalReport {
  std::vector<EvalRow> rows;

  // Every successful non-Coulomb row against its scenario's Coulomb row, when
  // that row succeeded with nonzero displacement.
  std::vector<Reduction> reductions() const;
  const EvalRow* find(const std::string& scenario, const std::string& model) const;
  std::string to_csv() const;
  std::string to_text() const;
};

// Rows of a scenario run concurrently up to `jobs`; the time-matched
// ablations stop the time search at the slowest learned plan's t_step.
EvalReport run_evaluation(const EvalConfig& config, int jobs = 1);

// Runs fn(0..count-1) on up to `jobs` threads.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace tray
