#pragma once

#include <array>
#include <optional>

#include "tray/robot.hpp"
#include "tray/trajectory.hpp"

namespace tray {

// Rest-to-rest jerk-limited straight-line profile. Phase jerks are
// +j, 0, -j, 0, -j, 0, +j.
struct ScurveProfile {
  double distance = 0.0;  // m
  double a_max = 0.0;     // m/s^2
  double j_max = 0.0;     // m/s^3
  std::optional<double> v_max;
  std::array<double, 7> phase_durations{};
  double total_time = 0.0;

  double peak_velocity() const;
  double peak_acceleration() const;
  double phase_jerk(int phase) const;
};

struct ProfileSample {
  double pos = 0.0;
  double vel = 0.0;
  double acc = 0.0;
};

ScurveProfile scurve_plan(double distance, double a_max, double j_max,
                          std::optional<double> v_max = std::nullopt);

// Throws OutOfRange outside [0, total_time].
ProfileSample sample_profile(const ScurveProfile& profile, double t);

struct LineOptions {
  double control_dt = 0.002;
  Eigen::VectorXd seed;  // IK seed for the first sample
  // Tray yaw held along the line; default atan2(start.y, start.x).
  std::optional<double> yaw;
  IkOptions ik;
};

// Joint trajectory at control_dt tracking start + s(t) (end - start)/|end - start|
// with a level tray. Velocities come from J^-1 [v; 0], accelerations from
// velocity differences, and positions from the integration recurrence so the
// result satisfies the Trajectory invariants exactly.
Trajectory line_to_joint_trajectory(const RobotModel& model, const Eigen::Vector3d& start,
                                    const Eigen::Vector3d& end, const ScurveProfile& profile,
                                    const LineOptions& options);

}  // namespace tray
