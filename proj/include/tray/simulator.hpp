#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "tray/alpha.hpp"
#include "tray/audio.hpp"
#include "tray/constraints.hpp"
#include "tray/kinematics.hpp"
#include "tray/trajectory.hpp"

namespace tray {

// Ground truth the simulated objects obey. The effective coefficient is
// mu_s_true * alpha_star(|v_tray|); kinetic friction is kinetic_ratio times that.
struct GroundTruthFriction {
  double mu_s_true = 0.21;
  double kinetic_ratio = 0.9;
  AlphaPtr alpha_star;  // null means alpha = 1

  double alpha_at(double speed) const { return alpha_star ? alpha_star->value(speed) : 1.0; }
  void validate() const;
};

struct SimSettings {
  double tray_radius = 0.15;   // m
  double sim_dt = 1e-4;        // s
  double stick_speed = 1e-4;   // m/s, snap-to-stick threshold
  double settle_time = 1.0;    // s simulated at the final rest state if still sliding
  bool record_timeline = true;
};

struct SlipSample {
  double t = 0.0;
  bool slipping = false;
  double relative_speed = 0.0;  // m/s
};

struct ObjectOutcome {
  double displacement_mm = 0.0;
  bool fell_off = false;
  std::optional<double> first_slip_time;
  Eigen::Vector2d final_position = Eigen::Vector2d::Zero();  // tray frame, m
  std::vector<SlipSample> timeline;
};

enum class SimStatus { Completed, NegativeNormal };

const char* sim_status_name(SimStatus status);

struct SimResult {
  SimStatus status = SimStatus::Completed;
  std::optional<double> contact_loss_time;
  std::optional<long> contact_loss_object;
  double sim_dt = 0.0;
  double duration = 0.0;  // simulated time, including settling
  std::vector<ObjectOutcome> objects;

  double mean_displacement_mm() const;
  bool any_fell_off() const;
  std::optional<double> first_slip_time() const;
};

// Tray motion as a function of time; gravity is supplied separately.
using MotionSource = std::function<kin::TrayMotion<double>(double t)>;

// Point-mass stick-slip integration in the tray frame for an arbitrary motion.
SimResult simulate_motion(const MotionSource& motion, double duration, const Eigen::Vector3d& gravity,
                          const std::vector<ObjectSpec>& objects, const GroundTruthFriction& friction,
                          const SimSettings& settings = {});

// Requires sim_dt <= t_step / 10.
SimResult simulate_transport(const RobotModel& model, const Trajectory& trajectory,
                             const std::vector<ObjectSpec>& objects, const GroundTruthFriction& friction,
                             const SimSettings& settings = {});

// Smallest k * increment (k >= 1) at which an object on a tilted plane with
// coefficient mu_s_true starts to slide.
double virtual_tilt(double mu_s_true, double increment = 0.01);

struct SynthParams {
  double sample_rate = 44100.0;
  double gain_vibration = 0.05;   // per m/s of tray speed
  double gain_slip = 0.2;
  double slip_speed_ref = 0.05;   // m/s, burst grows as 1 + v_rel / ref
  double sensor_noise = 0.002;    // RMS
  double vibration_low = 50.0;    // Hz
  double vibration_high = 800.0;
  double burst_low = 2000.0;
  double burst_high = 8000.0;
  double tail = 0.05;             // s of audio after the motion ends
  std::uint64_t seed = 0;
};

// Contact-microphone signal: speed-proportional vibration noise, a slip burst
// while any object slides, and a white sensor floor. The clip spans the
// trajectory plus params.tail.
AudioClip synth_audio(const SimResult& sim, const RobotModel& model, const Trajectory& trajectory,
                      const SynthParams& params);

// Same signal for a known tray-speed series (uniform spacing `dt`).
AudioClip synth_audio_from_speed(const SimResult& sim, const std::vector<double>& tray_speed, double dt,
                                 const SynthParams& params);

}  // namespace tray
