#pragma once

// Scalar-generic chain propagation. Instantiated with double for evaluation
// and with Eigen::AutoDiffScalar for constraint Jacobians.

#include <Eigen/Dense>
#include <cmath>

#include "tray/robot.hpp"

namespace tray::kin {

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;

template <typename S>
struct TrayMotion {
  Mat3<S> rotation;
  Vec3<S> position;
  Vec3<S> velocity;          // tray origin, world frame
  Vec3<S> angular_velocity;
  Vec3<S> acceleration;      // tray origin, world frame, gravity not included
  Vec3<S> angular_acceleration;
};

// Outward velocity/acceleration recursion along the chain (kinematic half of
// Newton-Euler). Vectors are expressed in the world frame.
template <typename S, typename QVec>
TrayMotion<S> propagate(const RobotModel& model, const QVec& q, const QVec& qd, const QVec& qdd) {
  using std::cos;
  using std::sin;
  TrayMotion<S> m;
  m.rotation.setIdentity();
  m.position.setZero();
  m.velocity.setZero();
  m.angular_velocity.setZero();
  m.acceleration.setZero();
  m.angular_acceleration.setZero();

  const int n = model.dof();
  for (int i = 0; i < n; ++i) {
    const DhRow& row = model.dh_rows[i];
    const Vec3<S> z = m.rotation.col(2);
    const Vec3<S> spin = z * qd[i];

    m.angular_acceleration += z * qdd[i] + m.angular_velocity.cross(spin);
    m.angular_velocity += spin;

    const S theta = q[i] + S(row.theta_offset);
    const S ct = cos(theta);
    const S st = sin(theta);
    const double ca = std::cos(row.alpha);
    const double sa = std::sin(row.alpha);

    Mat3<S> local;
    local << ct, -st * ca, st * sa,
             st, ct * ca, -ct * sa,
             S(0), S(sa), S(ca);
    Vec3<S> link_local;
    link_local << S(row.a) * ct, S(row.a) * st, S(row.d);

    const Vec3<S> link = m.rotation * link_local;
    m.position += link;
    m.velocity += m.angular_velocity.cross(link);
    m.acceleration += m.angular_acceleration.cross(link) +
                      m.angular_velocity.cross(m.angular_velocity.cross(link));
    m.rotation = (m.rotation * local).eval();
  }

  const Vec3<S> tray_offset = m.rotation * model.tray_transform.translation.cast<S>();
  m.position += tray_offset;
  m.velocity += m.angular_velocity.cross(tray_offset);
  m.acceleration += m.angular_acceleration.cross(tray_offset) +
                    m.angular_velocity.cross(m.angular_velocity.cross(tray_offset));
  m.rotation = (m.rotation * model.tray_transform.rotation.cast<S>()).eval();
  return m;
}

// Specific force at a point fixed in the tray frame.
template <typename S>
Vec3<S> point_specific_force(const RobotModel& model, const TrayMotion<S>& m,
                             const Eigen::Vector3d& offset) {
  const Vec3<S> r = m.rotation * offset.cast<S>();
  return m.acceleration + m.angular_acceleration.cross(r) +
         m.angular_velocity.cross(m.angular_velocity.cross(r)) - model.gravity.cast<S>();
}

}  // namespace tray::kin
