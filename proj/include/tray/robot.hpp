#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "tray/errors.hpp"

namespace tray {

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose operator*(const Pose& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
  Eigen::Vector3d apply(const Eigen::Vector3d& point) const { return rotation * point + translation; }

  static Pose level(const Eigen::Vector3d& position, double yaw = 0.0);
};

// Standard (distal) Denavit-Hartenberg row: Rz(theta + theta_offset) Tz(d) Tx(a) Rx(alpha).
struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double theta_offset = 0.0;
};

struct JointLimit {
  double pos_min = -2.0 * M_PI;
  double pos_max = 2.0 * M_PI;
  double vel = 3.14;   // symmetric bound, rad/s
  double acc = 10.0;   // rad/s^2
  double jerk = 100.0; // rad/s^3
};

struct RobotModel {
  std::vector<DhRow> dh_rows;
  std::vector<JointLimit> joint_limits;
  Pose tray_transform;  // flange -> tray frame; tray +z is the contact normal
  Eigen::Vector3d gravity{0.0, 0.0, -9.81};

  int dof() const { return static_cast<int>(dh_rows.size()); }

  // Throws InvalidArgument when limits are empty intervals or the tray
  // rotation is not orthonormal.
  void validate() const;
};

struct JointState {
  Eigen::VectorXd q;
  Eigen::VectorXd qd;
  Eigen::VectorXd qdd;

  static JointState at_rest(const Eigen::VectorXd& q) {
    return {q, Eigen::VectorXd::Zero(q.size()), Eigen::VectorXd::Zero(q.size())};
  }
};

RobotModel load_robot_model(const std::string& path);
RobotModel robot_model_from_json_text(const std::string& text);
std::string robot_model_to_json_text(const RobotModel& model);

// Tray-frame pose in the world (base) frame.
Pose forward_kinematics(const RobotModel& model, const Eigen::VectorXd& q);

// World-frame unit normal of the tray contact surface.
Eigen::Vector3d tray_normal(const RobotModel& model, const Eigen::VectorXd& q);

// Linear velocity of the tray origin, J_lin(q) qd.
Eigen::Vector3d ee_linear_velocity(const RobotModel& model, const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qd);

// Specific force the tray must supply to a point rigidly attached at `offset`
// (tray frame): the point's world acceleration minus gravity. For a level,
// stationary tray this is (0, 0, +9.81).
Eigen::Vector3d centroid_acceleration(const RobotModel& model, const JointState& state,
                                      const Eigen::Vector3d& offset);

// 6 x n geometric Jacobian of the tray origin, rows (linear; angular).
Eigen::MatrixXd geometric_jacobian(const RobotModel& model, const Eigen::VectorXd& q);

// sqrt(det(J^T J)) for n <= 6.
double manipulability(const RobotModel& model, const Eigen::VectorXd& q);

// Rotation vector (axis * angle) of R_target * R_current^T.
Eigen::Vector3d orientation_error(const Eigen::Matrix3d& target, const Eigen::Matrix3d& current);

struct IkOptions {
  int max_iterations = 500;
  double damping = 1e-3;
  double max_step = 0.2;  // rad, per iteration
  double position_tolerance = 1e-9;
  double orientation_tolerance = 1e-9;
  double min_manipulability = 1e-3;
};

// Damped least squares IK seeded from `seed`. Throws IKFailure when the
// target is not reached or the solution is near-singular.
Eigen::VectorXd inverse_kinematics(const RobotModel& model, const Pose& target,
                                   const Eigen::VectorXd& seed, const IkOptions& options = {});

}  // namespace tray
