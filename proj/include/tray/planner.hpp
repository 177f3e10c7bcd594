#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tray/constraints.hpp"
#include "tray/robot.hpp"
#include "tray/trajectory.hpp"

namespace tray {

struct PlannerSettings {
  int max_sqp_iterations = 100;
  double penalty_initial = 1e3;
  double penalty_max = 1e7;
  double penalty_growth = 10.0;
  double trust_initial = 0.1;   // rad, per waypoint on q
  double trust_shrink = 0.5;
  double trust_grow = 1.6;
  double trust_min = 1e-6;
  double trust_max = 1.0;
  // Trust radius on q̇ and q̈ as (this * radius) times the joint's velocity and
  // acceleration limits; 0 leaves them unbounded.
  double trust_derivative_scale = 1.0;
  double accept_ratio = 0.1;    // actual / predicted merit decrease
  double convergence_tolerance = 1e-4;
  double margin_tolerance = 1e-4;     // m/s^2
  // Margin the QP rows aim for, m/s^2. The merit function only charges
  // margins below zero, and a solve succeeds when every sampled margin is
  // >= -margin_tolerance.
  double margin_backoff = 0.01;
  double contact_epsilon = 0.5;       // m/s^2, fallback row a.n >= eps
  // Friction rows per segment beyond the left waypoint; the last one sits at
  // the end of the segment with the segment's acceleration.
  int segment_substeps = 2;
  double t_max = 4.0;
};

struct PlanRequest {
  Pose g_start;
  Pose g_goal;
  std::vector<ObjectSpec> objects;
  FrictionSpec friction;
  int horizon = 32;
  double t_step_init = 0.25;
  double t_step_resolution = 5e-5;
  RobotModel model;
  // IK seeds for the endpoint configurations (default: zeros).
  std::optional<Eigen::VectorXd> seed_start;
  std::optional<Eigen::VectorXd> seed_goal;
  // Time optimization stops at this t_step (the time-matched ablation).
  std::optional<double> t_step_floor;
  PlannerSettings settings;

  void validate() const;
};

enum class PlanStatus { Optimal, Infeasible };

const char* plan_status_name(PlanStatus status);

struct PlanResult {
  Trajectory trajectory;
  double duration = 0.0;
  Eigen::MatrixXd margins;  // (H+1) x objects
  int sqp_iterations = 0;   // iterations of the returned solve
  int total_sqp_iterations = 0;
  int solves = 0;
  PlanStatus status = PlanStatus::Infeasible;
};

// Endpoint joint configurations from IK.
struct Endpoints {
  Eigen::VectorXd q_start;
  Eigen::VectorXd q_goal;
};
Endpoints solve_endpoints(const PlanRequest& request);

struct SqpReport {
  bool success = false;
  Trajectory trajectory;
  int iterations = 0;
  double max_violation = 0.0;  // m/s^2, over all friction samples
  double objective = 0.0;      // sum of squared jerks
  // Merit value after each accepted step, with the penalty weight in use.
  std::vector<std::pair<double, double>> merit_history;
};

// One SQP solve at fixed t_step. Returns success=false when the merit stalls
// with violation above tolerance at the largest penalty weight.
SqpReport sqp_solve(const PlanRequest& request, double t_step,
                    const Trajectory* warm_start = nullptr);

// Linearization of g = -margin <= 0 at waypoint i, w.r.t. (q_i, q̇_i, q̈_i).
struct LinearizedRow {
  Eigen::VectorXd jacobian;  // d g / d x_i, length 3n
  double value = 0.0;        // g(x_i)
  double rhs = 0.0;          // J x_k - g(x_k) + c, with c = 0
  bool contact_fallback = false;
};
std::vector<LinearizedRow> linearize_constraint(const PlanRequest& request, const Trajectory& trajectory,
                                                int waypoint);

// Binary search on t_step. `solve` returns a trajectory when t is feasible.
struct BisectionResult {
  bool found = false;
  double t_ok = 0.0;
  double t_fail = 0.0;
  std::optional<Trajectory> trajectory;
  int solves = 0;
};
using StepSolver = std::function<std::optional<Trajectory>(double t_step, const Trajectory* warm)>;
BisectionResult bisect_time_step(double t_init, double resolution, double t_max,
                                 std::optional<double> t_floor, const StepSolver& solve);

PlanResult plan_time_optimal(const PlanRequest& request);

// Independent replay: per-waypoint margins via margin_for_objects.
Eigen::MatrixXd replay_margins(const PlanRequest& request, const Trajectory& trajectory);

}  // namespace tray
