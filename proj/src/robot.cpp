#include "tray/robot.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tray/kinematics.hpp"

namespace tray {

using nlohmann::json;

Pose Pose::level(const Eigen::Vector3d& position, double yaw) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  p.translation = position;
  return p;
}

void RobotModel::validate() const {
  if (dh_rows.empty()) throw InvalidArgument("robot model has no joints");
  if (joint_limits.size() != dh_rows.size()) {
    throw DimensionMismatch("joint_limits size " + std::to_string(joint_limits.size()) +
                            " != dh_rows size " + std::to_string(dh_rows.size()));
  }
  for (std::size_t i = 0; i < joint_limits.size(); ++i) {
    const JointLimit& l = joint_limits[i];
    if (!(l.pos_min < l.pos_max) || !(l.vel > 0) || !(l.acc > 0) || !(l.jerk > 0)) {
      throw InvalidArgument("empty limit interval on joint " + std::to_string(i));
    }
  }
  const Eigen::Matrix3d& r = tray_transform.rotation;
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() >= 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw InvalidArgument("tray_transform rotation is not orthonormal");
  }
}

namespace {

void check_dof(const RobotModel& model, const Eigen::VectorXd& v, const char* what) {
  if (v.size() != model.dof()) {
    throw DimensionMismatch(std::string(what) + " has length " + std::to_string(v.size()) +
                            ", robot has " + std::to_string(model.dof()) + " joints");
  }
}

RobotModel parse_model(const json& j) {
  RobotModel model;
  for (const auto& row : j.at("dh_rows")) {
    DhRow r;
    r.a = row.at("a").get<double>();
    r.d = row.at("d").get<double>();
    r.alpha = row.at("alpha").get<double>();
    r.theta_offset = row.value("theta_offset", 0.0);
    model.dh_rows.push_back(r);
  }
  for (const auto& lim : j.at("joint_limits")) {
    JointLimit l;
    l.pos_min = lim.at("pos")[0].get<double>();
    l.pos_max = lim.at("pos")[1].get<double>();
    l.vel = lim.at("vel").get<double>();
    l.acc = lim.at("acc").get<double>();
    l.jerk = lim.at("jerk").get<double>();
    model.joint_limits.push_back(l);
  }
  if (j.contains("tray_transform")) {
    const auto& t = j.at("tray_transform");
    const auto& qv = t.at("rotation_wxyz");
    Eigen::Quaterniond quat(qv[0].get<double>(), qv[1].get<double>(), qv[2].get<double>(),
                            qv[3].get<double>());
    if (std::abs(quat.norm() - 1.0) > 1e-6) throw InvalidArgument("tray quaternion is not unit");
    quat.normalize();
    model.tray_transform.rotation = quat.toRotationMatrix();
    const auto& tr = t.at("translation");
    model.tray_transform.translation = {tr[0].get<double>(), tr[1].get<double>(), tr[2].get<double>()};
  }
  if (j.contains("gravity")) {
    const auto& g = j.at("gravity");
    model.gravity = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
  }
  model.validate();
  return model;
}

}  // namespace

RobotModel robot_model_from_json_text(const std::string& text) {
  try {
    return parse_model(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("robot model: ") + e.what());
  }
}

RobotModel load_robot_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot model file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return robot_model_from_json_text(ss.str());
}

std::string robot_model_to_json_text(const RobotModel& model) {
  json j;
  j["dh_rows"] = json::array();
  for (const auto& r : model.dh_rows) {
    j["dh_rows"].push_back({{"a", r.a}, {"d", r.d}, {"alpha", r.alpha}, {"theta_offset", r.theta_offset}});
  }
  j["joint_limits"] = json::array();
  for (const auto& l : model.joint_limits) {
    j["joint_limits"].push_back(
        {{"pos", {l.pos_min, l.pos_max}}, {"vel", l.vel}, {"acc", l.acc}, {"jerk", l.jerk}});
  }
  const Eigen::Quaterniond quat(model.tray_transform.rotation);
  const auto& t = model.tray_transform.translation;
  j["tray_transform"] = {{"rotation_wxyz", {quat.w(), quat.x(), quat.y(), quat.z()}},
                         {"translation", {t.x(), t.y(), t.z()}}};
  j["gravity"] = {model.gravity.x(), model.gravity.y(), model.gravity.z()};
  return j.dump(2);
}

Pose forward_kinematics(const RobotModel& model, const Eigen::VectorXd& q) {
  check_dof(model, q, "q");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(q.size());
  const auto m = kin::propagate<double>(model, q, zero, zero);
  return {m.rotation, m.position};
}

Eigen::Vector3d tray_normal(const RobotModel& model, const Eigen::VectorXd& q) {
  return forward_kinematics(model, q).rotation.col(2);
}

Eigen::Vector3d ee_linear_velocity(const RobotModel& model, const Eigen::VectorXd& q,
                                   const Eigen::VectorXd& qd) {
  check_dof(model, q, "q");
  check_dof(model, qd, "qd");
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(q.size());
  return kin::propagate<double>(model, q, qd, zero).velocity;
}

Eigen::Vector3d centroid_acceleration(const RobotModel& model, const JointState& state,
                                      const Eigen::Vector3d& offset) {
  check_dof(model, state.q, "q");
  check_dof(model, state.qd, "qd");
  check_dof(model, state.qdd, "qdd");
  const auto m = kin::propagate<double>(model, state.q, state.qd, state.qdd);
  return kin::point_specific_force<double>(model, m, offset);
}

Eigen::MatrixXd geometric_jacobian(const RobotModel& model, const Eigen::VectorXd& q) {
  check_dof(model, q, "q");
  const int n = model.dof();
  Eigen::MatrixXd jac(6, n);
  // Column i is the tray velocity for a unit rate on joint i alone.
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd unit = zero;
    unit[i] = 1.0;
    const auto m = kin::propagate<double>(model, q, unit, zero);
    jac.block<3, 1>(0, i) = m.velocity;
    jac.block<3, 1>(3, i) = m.angular_velocity;
  }
  return jac;
}

double manipulability(const RobotModel& model, const Eigen::VectorXd& q) {
  const Eigen::MatrixXd jac = geometric_jacobian(model, q);
  const double det = (jac.transpose() * jac).determinant();
  return std::sqrt(std::max(det, 0.0));
}

Eigen::Vector3d orientation_error(const Eigen::Matrix3d& target, const Eigen::Matrix3d& current) {
  const Eigen::AngleAxisd aa(target * current.transpose());
  return aa.axis() * aa.angle();
}

Eigen::VectorXd inverse_kinematics(const RobotModel& model, const Pose& target,
                                   const Eigen::VectorXd& seed, const IkOptions& options) {
  check_dof(model, seed, "seed");
  const int n = model.dof();
  Eigen::VectorXd q = seed;
  Eigen::Matrix<double, 6, 1> err;
  for (int it = 0; it < options.max_iterations; ++it) {
    const Pose cur = forward_kinematics(model, q);
    err.head<3>() = target.translation - cur.translation;
    err.tail<3>() = orientation_error(target.rotation, cur.rotation);
    if (err.head<3>().norm() < options.position_tolerance &&
        err.tail<3>().norm() < options.orientation_tolerance) {
      break;
    }
    const Eigen::MatrixXd jac = geometric_jacobian(model, q);
    // Damping fades as the error shrinks so the final iterations are Gauss-Newton.
    const double lambda = options.damping * std::min(1.0, err.norm());
    const Eigen::MatrixXd lhs =
        jac.transpose() * jac + lambda * lambda * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd step = lhs.ldlt().solve(jac.transpose() * err);
    const double step_norm = step.norm();
    if (step_norm > options.max_step) step *= options.max_step / step_norm;
    q += step;
  }
  const Pose cur = forward_kinematics(model, q);
  const double pos_err = (target.translation - cur.translation).norm();
  const double rot_err = orientation_error(target.rotation, cur.rotation).norm();
  if (!(pos_err < std::max(options.position_tolerance, 1e-7)) ||
      !(rot_err < std::max(options.orientation_tolerance, 1e-7))) {
    throw IKFailure("IK did not converge: position error " + std::to_string(pos_err) +
                    " m, orientation error " + std::to_string(rot_err) + " rad");
  }
  if (n >= 6 && manipulability(model, q) < options.min_manipulability) {
    throw IKFailure("IK solution is near-singular (manipulability " +
                    std::to_string(manipulability(model, q)) + ")");
  }
  for (int i = 0; i < n; ++i) {
    const JointLimit& l = model.joint_limits[i];
    if (q[i] < l.pos_min || q[i] > l.pos_max) {
      throw IKFailure("IK solution violates position limit on joint " + std::to_string(i));
    }
  }
  return q;
}

}  // namespace tray
