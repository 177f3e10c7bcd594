#include "tray/profiles.hpp"

#include <algorithm>
#include <cmath>

namespace tray {

namespace {

// Ramp from rest to velocity v with jerk j and acceleration capped at a.
// Returns (jerk time, constant-acceleration time).
std::pair<double, double> ramp_times(double v, double a, double j) {
  if (v * j >= a * a) return {a / j, v / a - a / j};
  return {std::sqrt(v / j), 0.0};
}

double ramp_duration(double v, double a, double j) {
  const auto [tj, tc] = ramp_times(v, a, j);
  return 2.0 * tj + tc;
}

}  // namespace

double ScurveProfile::phase_jerk(int phase) const {
  static constexpr int kSign[7] = {1, 0, -1, 0, -1, 0, 1};
  return kSign[phase] * j_max;
}

double ScurveProfile::peak_acceleration() const { return j_max * phase_durations[0]; }

double ScurveProfile::peak_velocity() const {
  const double tj = phase_durations[0];
  return j_max * tj * tj + j_max * tj * phase_durations[1];
}

ScurveProfile scurve_plan(double distance, double a_max, double j_max, std::optional<double> v_max) {
  if (!(distance > 0.0) || !(a_max > 0.0) || !(j_max > 0.0)) {
    throw InvalidArgument("scurve_plan needs positive distance, a_max and j_max");
  }
  if (v_max && !(*v_max > 0.0)) throw InvalidArgument("v_max must be positive");

  // Without cruise the distance is v_peak * ramp_duration(v_peak).
  double v_peak;
  if (distance * distance * j_max / 4.0 <= std::pow(a_max * a_max / j_max, 3)) {
    v_peak = std::cbrt(distance * distance * j_max / 4.0);
  } else {
    const double b = a_max / j_max;
    v_peak = 0.5 * a_max * (-b + std::sqrt(b * b + 4.0 * distance / a_max));
  }
  double cruise = 0.0;
  if (v_max && *v_max < v_peak) {
    v_peak = *v_max;
    cruise = (distance - v_peak * ramp_duration(v_peak, a_max, j_max)) / v_peak;
  }

  const auto [tj, tc] = ramp_times(v_peak, a_max, j_max);
  ScurveProfile p;
  p.distance = distance;
  p.a_max = a_max;
  p.j_max = j_max;
  p.v_max = v_max;
  p.phase_durations = {tj, tc, tj, std::max(cruise, 0.0), tj, tc, tj};
  p.total_time = 0.0;
  for (double d : p.phase_durations) p.total_time += d;
  return p;
}

ProfileSample sample_profile(const ScurveProfile& profile, double t) {
  if (!(t >= 0.0) || t > profile.total_time * (1.0 + 1e-12) + 1e-15) {
    throw OutOfRange("t = " + std::to_string(t) + " outside profile duration " +
                     std::to_string(profile.total_time));
  }
  if (t >= profile.total_time) return {profile.distance, 0.0, 0.0};
  double p = 0.0, v = 0.0, a = 0.0;
  double remaining = t;
  for (int k = 0; k < 7; ++k) {
    const double j = profile.phase_jerk(k);
    const double d = std::min(remaining, profile.phase_durations[k]);
    p += v * d + a * d * d / 2.0 + j * d * d * d / 6.0;
    v += a * d + j * d * d / 2.0;
    a += j * d;
    remaining -= d;
    if (remaining <= 0.0) break;
  }
  // The symmetric profile mirrors about the midpoint; evaluating the second
  // half from the end keeps the terminal state exact.
  if (t > profile.total_time / 2.0) {
    ProfileSample mirror{0.0, 0.0, 0.0};
    double back = profile.total_time - t;
    for (int k = 6; k >= 0 && back > 0.0; --k) {
      const double j = profile.phase_jerk(k);
      const double d = std::min(back, profile.phase_durations[k]);
      // m(s) = distance - p(T - s) has the same jerk and negated acceleration.
      mirror.pos += mirror.vel * d + mirror.acc * d * d / 2.0 + j * d * d * d / 6.0;
      mirror.vel += mirror.acc * d + j * d * d / 2.0;
      mirror.acc += j * d;
      back -= d;
    }
    return {profile.distance - mirror.pos, mirror.vel, -mirror.acc};
  }
  return {p, v, a};
}

Trajectory line_to_joint_trajectory(const RobotModel& model, const Eigen::Vector3d& start,
                                    const Eigen::Vector3d& end, const ScurveProfile& profile,
                                    const LineOptions& options) {
  if (!(options.control_dt > 0.0)) throw InvalidArgument("control_dt must be positive");
  const int n = model.dof();
  const Eigen::VectorXd seed = options.seed.size() == n ? options.seed : Eigen::VectorXd::Zero(n);
  const double yaw = options.yaw.value_or(std::atan2(start.y(), start.x()));

  const double dt = options.control_dt;
  const int steps = std::max(1, static_cast<int>(std::ceil(profile.total_time / dt - 1e-9)));
  const Eigen::Vector3d delta = end - start;
  const Eigen::Vector3d unit = profile.distance > 0.0 ? Eigen::Vector3d(delta / profile.distance)
                                                      : Eigen::Vector3d::Zero();

  std::vector<Eigen::VectorXd> q_ik(steps + 1), qd(steps + 1);
  Eigen::VectorXd guess = seed;
  for (int i = 0; i <= steps; ++i) {
    const double t = std::min(i * dt, profile.total_time);
    const ProfileSample s = sample_profile(profile, t);
    const Pose target = Pose::level(start + s.pos * unit, yaw);
    q_ik[i] = inverse_kinematics(model, target, guess, options.ik);
    guess = q_ik[i];
    Eigen::VectorXd twist = Eigen::VectorXd::Zero(6);
    twist.head<3>() = s.vel * unit;
    const Eigen::MatrixXd jac = geometric_jacobian(model, q_ik[i]);
    qd[i] = jac.colPivHouseholderQr().solve(twist);
  }

  Trajectory out;
  out.t_step = dt;
  out.points.resize(steps + 1);
  out.points[0].q = q_ik[0];
  for (int i = 0; i <= steps; ++i) {
    JointState& p = out.points[i];
    p.qd = qd[i];
    p.qdd = i < steps ? Eigen::VectorXd((qd[i + 1] - qd[i]) / dt) : Eigen::VectorXd::Zero(n);
    if (i > 0) {
      const JointState& prev = out.points[i - 1];
      p.q = prev.q + dt * prev.qd + 0.5 * dt * dt * prev.qdd;
    }
  }
  return out;
}

}  // namespace tray
