#pragma once

#include <random>

#include "tray/robot.hpp"

namespace tray::test {

inline const RobotModel& ur5e() {
  static const RobotModel model = load_robot_model(TRAY_CONFIG_DIR "/ur5e_tray.json");
  return model;
}

// A comfortable configuration away from singularities (tray level, pointing up).
inline Eigen::VectorXd home() {
  Eigen::VectorXd q(6);
  q << 0.546, -2.728, -1.082, -0.903, -1.571, -1.737;
  return q;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace tray::test
