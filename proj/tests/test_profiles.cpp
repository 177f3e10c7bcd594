#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tray/errors.hpp"
#include "tray/profiles.hpp"

using namespace tray;

namespace {

// Piecewise-constant jerk integrated exactly over the phase durations.
ProfileSample integrate(const ScurveProfile& p, double t) {
  ProfileSample s;
  double elapsed = 0.0;
  for (int k = 0; k < 7 && elapsed < t; ++k) {
    const double h = std::min(p.phase_durations[k], t - elapsed);
    const double j = p.phase_jerk(k);
    s.pos += s.vel * h + 0.5 * s.acc * h * h + j * h * h * h / 6.0;
    s.vel += s.acc * h + 0.5 * j * h * h;
    s.acc += j * h;
    elapsed += p.phase_durations[k];
  }
  return s;
}

}  // namespace

TEST_CASE("samples agree with exact jerk integration") {
  for (auto [d, a, j] : {std::tuple{0.5, 2.5, 10.0}, {0.5, 1.0, 1.0}, {0.5, 2.5, 1.0}, {2.0, 1.0, 50.0}}) {
    const ScurveProfile p = scurve_plan(d, a, j);
    for (int i = 0; i <= 200; ++i) {
      const double t = p.total_time * i / 200.0;
      const ProfileSample got = sample_profile(p, t), ref = integrate(p, t);
      CHECK(got.pos == doctest::Approx(ref.pos).epsilon(1e-9).scale(1.0));
      CHECK(got.vel == doctest::Approx(ref.vel).epsilon(1e-9).scale(1.0));
      CHECK(got.acc == doctest::Approx(ref.acc).epsilon(1e-9).scale(1.0));
    }
    const ProfileSample end = sample_profile(p, p.total_time);
    CHECK(end.pos == doctest::Approx(d).epsilon(1e-12));
    CHECK(std::abs(end.vel) < 1e-12);
    CHECK(std::abs(end.acc) < 1e-12);
    CHECK(p.peak_acceleration() <= a * (1 + 1e-12));
  }
}

TEST_CASE("acceleration-limited case has no constant phase when the jerk bound binds") {
  const double d = 0.1, j = 1.0;
  const ScurveProfile p = scurve_plan(d, 100.0, j);
  CHECK(p.total_time == doctest::Approx(2.0 * std::cbrt(4.0 * d / j)).epsilon(1e-12));
  CHECK(p.peak_velocity() == doctest::Approx(std::cbrt(d * d * j / 4.0)).epsilon(1e-12));
  CHECK(p.phase_durations[1] == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("position is monotone and velocity never negative") {
  const ScurveProfile p = scurve_plan(0.5, 2.5, 10.0);
  double last = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const ProfileSample s = sample_profile(p, p.total_time * i / 1000.0);
    CHECK(s.pos >= last - 1e-15);
    CHECK(s.vel >= -1e-12);
    last = s.pos;
  }
}

TEST_CASE("optional speed limit adds a cruise phase") {
  const ScurveProfile free = scurve_plan(1.0, 2.0, 10.0);
  const ScurveProfile capped = scurve_plan(1.0, 2.0, 10.0, 0.5);
  CHECK(capped.peak_velocity() == doctest::Approx(0.5));
  CHECK(capped.phase_durations[3] > 0.0);
  CHECK(capped.total_time > free.total_time);
  CHECK(sample_profile(capped, capped.total_time).pos == doctest::Approx(1.0));
}

TEST_CASE("invalid inputs") {
  CHECK_THROWS_AS(scurve_plan(-1.0, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(scurve_plan(1.0, 0.0, 1.0), InvalidArgument);
  const ScurveProfile p = scurve_plan(0.5, 1.0, 1.0);
  CHECK_THROWS_AS(sample_profile(p, p.total_time + 0.1), OutOfRange);
  CHECK_THROWS_AS(sample_profile(p, -0.1), OutOfRange);
}

TEST_CASE("joint trajectory tracks the Cartesian line with a level tray") {
  const Eigen::Vector3d start(0.2, 0.6, 0.2), end(-0.3, 0.6, 0.2);
  const ScurveProfile p = scurve_plan((end - start).norm(), 2.5, 10.0);
  LineOptions options;
  const Trajectory traj = line_to_joint_trajectory(test::ur5e(), start, end, p, options);
  CHECK(traj.t_step == options.control_dt);
  CHECK(traj.duration() >= p.total_time - 1e-12);
  CHECK(traj.max_integration_error() < 1e-12);
  const Eigen::Vector3d dir = (end - start).normalized();
  double worst_pos = 0.0, worst_tilt = 0.0, worst_speed = 0.0;
  for (int i = 0; i <= traj.horizon(); ++i) {
    const double t = std::min(i * traj.t_step, p.total_time);
    const ProfileSample s = sample_profile(p, t);
    const JointState& st = traj.points[i];
    const Pose pose = forward_kinematics(test::ur5e(), st.q);
    worst_pos = std::max(worst_pos, (pose.translation - (start + s.pos * dir)).norm());
    worst_tilt = std::max(worst_tilt, 1.0 - tray_normal(test::ur5e(), st.q).z());
    worst_speed = std::max(worst_speed, std::abs(ee_linear_velocity(test::ur5e(), st.q, st.qd).norm() - s.vel));
  }
  CHECK(worst_pos < 1e-4);
  CHECK(worst_tilt < 1e-6);
  CHECK(worst_speed < 2e-2);
  CHECK(traj.points.front().qd.norm() == 0.0);
}
