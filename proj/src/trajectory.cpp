#include "tray/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace tray {

JointState Trajectory::state_at(double t) const {
  if (points.empty()) throw InvalidArgument("empty trajectory");
  if (points.size() == 1 || t <= 0.0) return points.front();
  if (t >= duration()) return points.back();
  const int seg = std::min(static_cast<int>(t / t_step), horizon() - 1);
  const double tau = t - seg * t_step;
  const JointState& p = points[seg];
  return {p.q + tau * p.qd + 0.5 * tau * tau * p.qdd, p.qd + tau * p.qdd, p.qdd};
}

Trajectory Trajectory::rescaled(double new_t_step) const {
  if (!(new_t_step > 0.0)) throw InvalidArgument("t_step must be positive");
  const double ratio = t_step / new_t_step;
  Trajectory out{points, new_t_step};
  for (auto& p : out.points) {
    p.qd *= ratio;
    p.qdd *= ratio * ratio;
  }
  return out;
}

double Trajectory::max_integration_error() const {
  double worst = 0.0;
  const double t = t_step;
  for (int i = 0; i < horizon(); ++i) {
    const JointState& a = points[i];
    const JointState& b = points[i + 1];
    const Eigen::VectorXd rq = b.q - (a.q + t * a.qd + 0.5 * t * t * a.qdd);
    const Eigen::VectorXd rv = b.qd - (a.qd + t * a.qdd);
    worst = std::max({worst, rq.cwiseAbs().maxCoeff(), rv.cwiseAbs().maxCoeff()});
  }
  return worst;
}

double Trajectory::max_limit_ratio(const RobotModel& model) const {
  double worst = 0.0;
  for (int i = 0; i <= horizon(); ++i) {
    const JointState& p = points[i];
    for (int j = 0; j < model.dof(); ++j) {
      const JointLimit& l = model.joint_limits[j];
      const double mid = 0.5 * (l.pos_min + l.pos_max);
      const double half = 0.5 * (l.pos_max - l.pos_min);
      worst = std::max({worst, std::abs(p.q[j] - mid) / half, std::abs(p.qd[j]) / l.vel,
                        std::abs(p.qdd[j]) / l.acc});
      if (i < horizon()) {
        const double jerk = (points[i + 1].qdd[j] - p.qdd[j]) / t_step;
        worst = std::max(worst, std::abs(jerk) / l.jerk);
      }
    }
  }
  return worst;
}

Trajectory Trajectory::constant(const Eigen::VectorXd& q, int horizon, double t_step) {
  return {std::vector<JointState>(horizon + 1, JointState::at_rest(q)), t_step};
}

}  // namespace tray
