#pragma once

#include <algorithm>
#include <memory>

namespace tray {

// Velocity-conditioned friction multiplier: alpha(|v|) scales the static
// coefficient, mu_effective = alpha * mu_s.
class AlphaFunction {
 public:
  virtual ~AlphaFunction() = default;
  virtual double value(double speed) const = 0;
  // d alpha / d speed at `speed`.
  virtual double slope(double speed) const = 0;
};

class ConstantAlpha final : public AlphaFunction {
 public:
  explicit ConstantAlpha(double alpha) : alpha_(alpha) {}
  double value(double) const override { return alpha_; }
  double slope(double) const override { return 0.0; }

 private:
  double alpha_;
};

// alpha(v) = max(floor, intercept - rate * v).
class ClampedLinearAlpha final : public AlphaFunction {
 public:
  ClampedLinearAlpha(double intercept, double rate, double floor)
      : intercept_(intercept), rate_(rate), floor_(floor) {}
  double value(double speed) const override { return std::max(floor_, intercept_ - rate_ * speed); }
  double slope(double speed) const override {
    return intercept_ - rate_ * speed > floor_ ? -rate_ : 0.0;
  }

 private:
  double intercept_;
  double rate_;
  double floor_;
};

using AlphaPtr = std::shared_ptr<const AlphaFunction>;

}  // namespace tray
