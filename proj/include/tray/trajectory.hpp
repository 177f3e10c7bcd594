#pragma once

#include <vector>

#include "tray/robot.hpp"

namespace tray {

// H+1 waypoint states separated by a uniform t_step. Between waypoints the
// joint acceleration is held at the left waypoint's value, which is exactly
// the motion the integration rows describe:
//   q_{i+1}  = q_i + t q̇_i + t²/2 q̈_i
//   q̇_{i+1} = q̇_i + t q̈_i
struct Trajectory {
  std::vector<JointState> points;
  double t_step = 0.0;

  int horizon() const { return static_cast<int>(points.size()) - 1; }
  double duration() const { return horizon() * t_step; }
  int dof() const { return points.empty() ? 0 : static_cast<int>(points.front().q.size()); }

  // State at time t in [0, duration()], clamped at the ends.
  JointState state_at(double t) const;

  // Same positions, derivatives rescaled so the trajectory runs with a new
  // step. The integration rows remain satisfied exactly.
  Trajectory rescaled(double new_t_step) const;

  // Largest |residual| of the two integration rows over all segments.
  double max_integration_error() const;

  // Largest (q̈_{i+1} - q̈_i) / t_step divided by the joint's jerk bound, and
  // analogous ratios for q, q̇, q̈. Values <= 1 satisfy the limits.
  double max_limit_ratio(const RobotModel& model) const;

  static Trajectory constant(const Eigen::VectorXd& q, int horizon, double t_step);
};

}  // namespace tray
