#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "tray/audio.hpp"
#include "tray/errors.hpp"
#include "tray/kinematics.hpp"
#include "tray/simulator.hpp"

using namespace tray;

namespace {

// Level tray accelerating at A along x for T seconds, then coasting.
MotionSource push(double A, double T) {
  return [=](double t) {
    kin::TrayMotion<double> m;
    m.rotation.setIdentity();
    m.angular_velocity.setZero();
    m.angular_acceleration.setZero();
    const double tt = std::min(t, T);
    m.position = Eigen::Vector3d(0.5 * A * tt * tt + A * T * (t - tt), 0, 0);
    m.velocity = Eigen::Vector3d(A * tt, 0, 0);
    m.acceleration = Eigen::Vector3d(t < T ? A : 0.0, 0, 0);
    return m;
  };
}

const Eigen::Vector3d kGravity(0, 0, -9.81);

}  // namespace

TEST_CASE("constant push above the static limit slides by the closed-form distance") {
  const double A = 3.0, T = 0.2, mu = 0.21, ratio = 0.9, g = 9.81;
  GroundTruthFriction truth;
  truth.mu_s_true = mu;
  truth.kinetic_ratio = ratio;
  SimSettings settings;
  settings.sim_dt = 1e-5;
  const SimResult r = simulate_motion(push(A, T), 0.6, kGravity, {ObjectSpec{}}, truth, settings);
  const double ak = ratio * mu * g;
  const double during = 0.5 * (A - ak) * T * T;
  const double v_rel = (A - ak) * T;
  const double after = v_rel * v_rel / (2 * ak);
  REQUIRE(r.status == SimStatus::Completed);
  CHECK(r.mean_displacement_mm() == doctest::Approx(1e3 * (during + after)).epsilon(2e-3));
  REQUIRE(r.first_slip_time());
  CHECK(*r.first_slip_time() < 2e-5);
  CHECK_FALSE(r.any_fell_off());
}

TEST_CASE("push below the static limit does not move the object") {
  GroundTruthFriction truth;
  const SimResult r = simulate_motion(push(0.95 * 0.21 * 9.81, 0.3), 0.5, kGravity, {ObjectSpec{}}, truth);
  CHECK(r.mean_displacement_mm() == 0.0);
  CHECK_FALSE(r.first_slip_time());
}

TEST_CASE("velocity-dependent ground truth triggers slip once alpha drops") {
  // alpha(v) = 1 - 0.8 v; static limit A = alpha mu g is crossed at v*.
  const double A = 1.5, mu = 0.21, g = 9.81;
  GroundTruthFriction truth;
  truth.alpha_star = std::make_shared<ClampedLinearAlpha>(1.0, 0.8, 0.3);
  SimSettings settings;
  settings.sim_dt = 1e-5;
  const SimResult r = simulate_motion(push(A, 0.6), 0.7, kGravity, {ObjectSpec{}}, truth, settings);
  const double v_star = (1.0 - A / (mu * g)) / 0.8;
  REQUIRE(r.first_slip_time());
  CHECK(*r.first_slip_time() == doctest::Approx(v_star / A).epsilon(1e-3));
}

TEST_CASE("an object pushed off the rim is flagged") {
  GroundTruthFriction truth;
  SimSettings settings;
  settings.tray_radius = 0.02;
  const SimResult r = simulate_motion(push(6.0, 0.3), 0.4, kGravity, {ObjectSpec{}}, truth, settings);
  CHECK(r.any_fell_off());
}

TEST_CASE("tilt angle is the first increment past atan(mu)") {
  CHECK(virtual_tilt(0.21, 0.01) == doctest::Approx(0.21));
  CHECK(virtual_tilt(0.3, 0.05) == doctest::Approx(0.3));
  CHECK(virtual_tilt(0.0, 0.01) == doctest::Approx(0.01));
}

TEST_CASE("transport simulation of a resting trajectory is quiet") {
  const Trajectory traj = Trajectory::constant(test::home(), 10, 0.05);
  GroundTruthFriction truth;
  SimSettings settings;
  settings.sim_dt = 1e-3;
  const SimResult r = simulate_transport(test::ur5e(), traj, {ObjectSpec{}}, truth, settings);
  CHECK(r.mean_displacement_mm() == 0.0);
  settings.sim_dt = 0.01;
  CHECK_THROWS_AS(simulate_transport(test::ur5e(), traj, {ObjectSpec{}}, truth, settings), InvalidArgument);
}

TEST_CASE("synthetic audio is seeded and survives a WAV round trip") {
  GroundTruthFriction truth;
  const SimResult sim = simulate_motion(push(3.0, 0.2), 0.3, kGravity, {ObjectSpec{}}, truth);
  std::vector<double> speed(151);
  for (std::size_t i = 0; i < speed.size(); ++i) speed[i] = std::min(i * 0.002, 0.2) * 3.0;
  SynthParams p;
  p.seed = 9;
  const AudioClip a = synth_audio_from_speed(sim, speed, 0.002, p);
  const AudioClip b = synth_audio_from_speed(sim, speed, 0.002, p);
  CHECK(a.samples == b.samples);
  CHECK(a.duration() == doctest::Approx(0.3 + p.tail).epsilon(1e-3));
  p.seed = 10;
  CHECK(synth_audio_from_speed(sim, speed, 0.002, p).samples != a.samples);

  const auto path = std::filesystem::temp_directory_path() / "tray_test_roundtrip.wav";
  write_wav(path.string(), a);
  const AudioClip back = read_wav(path.string());
  std::filesystem::remove(path);
  CHECK(back.sample_rate == a.sample_rate);
  CHECK(back.samples == quantize_pcm16(a).samples);
}

TEST_CASE("malformed WAV input is rejected") {
  const auto path = std::filesystem::temp_directory_path() / "tray_test_bad.wav";
  {
    std::ofstream f(path, std::ios::binary);
    f << "RIFF1234WAVEjunk";
  }
  CHECK_THROWS(read_wav(path.string()));
  std::filesystem::remove(path);
}
