#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tray/alpha.hpp"
#include "tray/errors.hpp"
#include "tray/robot.hpp"

namespace tray {

struct ObjectSpec {
  double mass = 0.1;                                    // kg
  Eigen::Vector3d centroid_offset = Eigen::Vector3d::Zero();  // tray frame, m
  double mu_s = 0.21;

  void validate() const;
};

enum class FrictionType { None, Coulomb, Learned };

struct FrictionSpec {
  FrictionType type = FrictionType::Coulomb;
  // Plan coefficient shared by all objects; when unset each object's own
  // mu_s is used.
  std::optional<double> mu_s;
  AlphaPtr alpha_model;       // Learned only
  std::string model_path;     // provenance of alpha_model, if loaded from disk
  double alpha_floor = 0.05;
  double alpha_ceiling = 1.0;

  static FrictionSpec none() { return {FrictionType::None, std::nullopt, nullptr, {}}; }
  static FrictionSpec coulomb(std::optional<double> mu = std::nullopt) {
    return {FrictionType::Coulomb, mu, nullptr, {}};
  }
  static FrictionSpec learned(AlphaPtr model, std::optional<double> mu = std::nullopt) {
    return {FrictionType::Learned, mu, std::move(model), {}};
  }

  double coefficient_for(const ObjectSpec& object) const { return mu_s.value_or(object.mu_s); }
  // alpha(speed) after the [alpha_floor, alpha_ceiling] clamp; 1 for Coulomb.
  double alpha_at(double speed) const;
  void validate() const;
};

const char* friction_type_name(FrictionType type);

// Smoothing constant for the tangential norm, m/s^2.
inline constexpr double kTangentialEpsilon = 1e-8;

namespace detail {

// Margin formula shared by every evaluation path (double and autodiff).
// Does not check contact: callers decide how to treat a.n <= 0.
template <typename S, typename Vec>
S friction_margin(const Vec& a, const Vec& n, const S& mu_effective) {
  using std::sqrt;
  const S an = a.dot(n);
  const Vec tangential = a - an * n;
  const S tangential_norm =
      sqrt(tangential.squaredNorm() + S(kTangentialEpsilon * kTangentialEpsilon));
  return mu_effective * an - tangential_norm;
}

}  // namespace detail

// mu_s (a.n) - |a - (a.n) n|, in m/s^2. Throws ContactLoss if a.n <= 0.
double coulomb_margin(const Eigen::Vector3d& a, const Eigen::Vector3d& n, double mu_s);

// Same with the coefficient scaled by alpha = clamp(model(v_mag), floor, ceiling).
double learned_margin(const Eigen::Vector3d& a, const Eigen::Vector3d& n, double v_mag, double mu_s,
                      const AlphaFunction& model, double alpha_floor = 0.05,
                      double alpha_ceiling = 1.0);

// Per-object margins at one robot state. For FrictionType::None the Coulomb
// margin is reported. ContactLoss carries the offending object index.
Eigen::VectorXd margin_for_objects(const RobotModel& model, const JointState& state,
                                   const std::vector<ObjectSpec>& objects, const FrictionSpec& spec);

// Same, without the contact check: a.n <= 0 yields the (negative) formula value.
Eigen::VectorXd margin_for_objects_unchecked(const RobotModel& model, const JointState& state,
                                             const std::vector<ObjectSpec>& objects,
                                             const FrictionSpec& spec);

// One-shot static friction measurement: tilt a virtual tray in `increment`
// steps until the object slides and report tan of that angle.
double virtual_tilt_test(double mu_true, double increment = 0.01);

}  // namespace tray
