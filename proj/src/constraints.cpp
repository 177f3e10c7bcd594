#include "tray/constraints.hpp"

#include <algorithm>
#include <cmath>

#include "tray/kinematics.hpp"
#include "tray/simulator.hpp"

namespace tray {

void ObjectSpec::validate() const {
  if (!(mass > 0.0)) throw InvalidArgument("object mass must be positive");
  if (!(mu_s >= 0.0 && mu_s < 2.0)) throw InvalidArgument("object mu_s must lie in [0, 2)");
  if (!centroid_offset.allFinite()) throw InvalidArgument("object centroid offset is not finite");
}

const char* friction_type_name(FrictionType type) {
  switch (type) {
    case FrictionType::None: return "none";
    case FrictionType::Coulomb: return "coulomb";
    case FrictionType::Learned: return "learned";
  }
  return "unknown";
}

double FrictionSpec::alpha_at(double speed) const {
  if (type != FrictionType::Learned) return 1.0;
  return std::clamp(alpha_model->value(speed), alpha_floor, alpha_ceiling);
}

void FrictionSpec::validate() const {
  if (mu_s && !(*mu_s >= 0.0 && *mu_s < 2.0)) throw InvalidArgument("friction mu_s must lie in [0, 2)");
  if (type == FrictionType::Learned && !alpha_model) {
    throw InvalidArgument("learned friction spec has no alpha model");
  }
  if (!(alpha_floor > 0.0 && alpha_floor <= alpha_ceiling)) {
    throw InvalidArgument("alpha clamp must satisfy 0 < floor <= ceiling");
  }
}

namespace {

void check_inputs(const Eigen::Vector3d& a, const Eigen::Vector3d& n) {
  if (std::abs(n.norm() - 1.0) > 1e-6) throw InvalidArgument("tray normal is not a unit vector");
  const double an = a.dot(n);
  if (!(an > 0.0)) throw ContactLoss(an);
}

}  // namespace

double coulomb_margin(const Eigen::Vector3d& a, const Eigen::Vector3d& n, double mu_s) {
  check_inputs(a, n);
  return detail::friction_margin<double>(a, n, mu_s);
}

double learned_margin(const Eigen::Vector3d& a, const Eigen::Vector3d& n, double v_mag, double mu_s,
                      const AlphaFunction& model, double alpha_floor, double alpha_ceiling) {
  check_inputs(a, n);
  if (v_mag < 0.0) throw InvalidArgument("speed must be non-negative");
  const double alpha = std::clamp(model.value(v_mag), alpha_floor, alpha_ceiling);
  return detail::friction_margin<double>(a, n, alpha * mu_s);
}

namespace {

Eigen::VectorXd margins_impl(const RobotModel& model, const JointState& state,
                             const std::vector<ObjectSpec>& objects, const FrictionSpec& spec,
                             bool check_contact) {
  if (objects.empty()) throw InvalidArgument("margin_for_objects needs at least one object");
  if (state.q.size() != model.dof() || state.qd.size() != model.dof() ||
      state.qdd.size() != model.dof()) {
    throw DimensionMismatch("joint state does not match robot dof");
  }
  const auto motion = kin::propagate<double>(model, state.q, state.qd, state.qdd);
  const Eigen::Vector3d n = motion.rotation.col(2);
  const double alpha = spec.alpha_at(motion.velocity.norm());

  Eigen::VectorXd out(objects.size());
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const Eigen::Vector3d a = kin::point_specific_force<double>(model, motion, objects[k].centroid_offset);
    if (check_contact && !(a.dot(n) > 0.0)) throw ContactLoss(a.dot(n), static_cast<long>(k));
    const double mu = spec.coefficient_for(objects[k]);
    out[k] = detail::friction_margin<double>(a, n, alpha * mu);
  }
  return out;
}

}  // namespace

Eigen::VectorXd margin_for_objects(const RobotModel& model, const JointState& state,
                                   const std::vector<ObjectSpec>& objects, const FrictionSpec& spec) {
  return margins_impl(model, state, objects, spec, true);
}

Eigen::VectorXd margin_for_objects_unchecked(const RobotModel& model, const JointState& state,
                                             const std::vector<ObjectSpec>& objects,
                                             const FrictionSpec& spec) {
  return margins_impl(model, state, objects, spec, false);
}

double virtual_tilt_test(double mu_true, double increment) {
  return std::tan(virtual_tilt(mu_true, increment));
}

}  // namespace tray
