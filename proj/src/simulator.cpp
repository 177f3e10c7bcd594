#include "tray/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tray {

void GroundTruthFriction::validate() const {
  if (!(mu_s_true >= 0.0 && mu_s_true < 2.0)) throw InvalidArgument("mu_s_true must be in [0, 2)");
  if (!(kinetic_ratio > 0.0 && kinetic_ratio <= 1.0)) throw InvalidArgument("kinetic_ratio must be in (0, 1]");
  if (alpha_star) {
    const double a0 = alpha_star->value(0.0);
    if (std::abs(a0 - 1.0) > 1e-9) throw InvalidArgument("alpha_star(0) must be 1");
  }
}

const char* sim_status_name(SimStatus status) {
  return status == SimStatus::Completed ? "completed" : "negative_normal";
}

double SimResult::mean_displacement_mm() const {
  if (objects.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& o : objects) sum += o.displacement_mm;
  return sum / objects.size();
}

bool SimResult::any_fell_off() const {
  return std::any_of(objects.begin(), objects.end(), [](const ObjectOutcome& o) { return o.fell_off; });
}

std::optional<double> SimResult::first_slip_time() const {
  std::optional<double> first;
  for (const auto& o : objects) {
    if (o.first_slip_time && (!first || *o.first_slip_time < *first)) first = o.first_slip_time;
  }
  return first;
}

namespace {

struct ObjectState {
  Eigen::Vector2d p;  // tray-frame position
  Eigen::Vector2d u = Eigen::Vector2d::Zero();
  double z = 0.0;
  bool slipping = false;
  bool off = false;
};

}  // namespace

SimResult simulate_motion(const MotionSource& motion, double duration, const Eigen::Vector3d& gravity,
                          const std::vector<ObjectSpec>& objects, const GroundTruthFriction& friction,
                          const SimSettings& settings) {
  friction.validate();
  if (!(settings.sim_dt > 0.0)) throw InvalidArgument("sim_dt must be positive");
  if (!(duration >= 0.0)) throw InvalidArgument("duration must be non-negative");
  for (const auto& o : objects) o.validate();

  const double dt = settings.sim_dt;
  SimResult result;
  result.sim_dt = dt;
  result.objects.resize(objects.size());

  std::vector<ObjectState> state(objects.size());
  for (std::size_t k = 0; k < objects.size(); ++k) {
    state[k].p = objects[k].centroid_offset.head<2>();
    state[k].z = objects[k].centroid_offset.z();
  }

  const long motion_steps = static_cast<long>(std::ceil(duration / dt - 1e-9));
  const long settle_steps = static_cast<long>(std::ceil(settings.settle_time / dt));
  long step = 0;
  for (;; ++step) {
    const bool settling = step > motion_steps;
    if (settling) {
      const bool moving = std::any_of(state.begin(), state.end(),
                                      [](const ObjectState& s) { return s.slipping && !s.off; });
      if (!moving || step > motion_steps + settle_steps) break;
    }
    const double t = step * dt;
    const kin::TrayMotion<double> m = motion(std::min(t, duration));
    const Eigen::Matrix3d Rt = m.rotation.transpose();
    const Eigen::Vector3d omega = Rt * m.angular_velocity;
    const double mu_eff = friction.mu_s_true * friction.alpha_at(m.velocity.norm());
    const double mu_k = friction.kinetic_ratio * mu_eff;

    for (std::size_t k = 0; k < objects.size(); ++k) {
      ObjectState& s = state[k];
      ObjectOutcome& out = result.objects[k];
      if (!s.off) {
        const Eigen::Vector3d r(s.p.x(), s.p.y(), s.z);
        const Eigen::Vector3d r_w = m.rotation * r;
        const Eigen::Vector3d a_w = m.acceleration + m.angular_acceleration.cross(r_w) +
                                    m.angular_velocity.cross(m.angular_velocity.cross(r_w)) - gravity;
        const Eigen::Vector3d a = Rt * a_w;
        const Eigen::Vector3d coriolis = 2.0 * omega.cross(Eigen::Vector3d(s.u.x(), s.u.y(), 0.0));
        const double normal = a.z() + coriolis.z();
        if (!(normal > 0.0)) {
          result.status = SimStatus::NegativeNormal;
          result.contact_loss_time = t;
          result.contact_loss_object = static_cast<long>(k);
          result.duration = t;
          goto finish;
        }
        const Eigen::Vector2d demand = a.head<2>();
        if (!s.slipping) {
          if (demand.norm() > mu_eff * normal) {
            s.slipping = true;
            if (!out.first_slip_time) out.first_slip_time = t;
          }
        }
        if (s.slipping) {
          const double speed = s.u.norm();
          const Eigen::Vector2d dir = speed > 0.0 ? Eigen::Vector2d(s.u / speed) : Eigen::Vector2d(-demand.normalized());
          const Eigen::Vector2d rel_acc = -demand - coriolis.head<2>() - mu_k * normal * dir;
          Eigen::Vector2d u_new = s.u + dt * rel_acc;
          const bool reversed = u_new.dot(dir) <= 0.0;
          if ((reversed || u_new.norm() < settings.stick_speed) && demand.norm() <= mu_eff * normal) {
            u_new.setZero();
            s.slipping = false;
          }
          s.u = u_new;
          s.p += dt * u_new;
        }
        if (s.p.norm() > settings.tray_radius) {
          s.off = true;
          s.slipping = false;
          out.fell_off = true;
        }
      }
      if (settings.record_timeline) out.timeline.push_back({t, s.slipping, s.u.norm()});
    }
    result.duration = t;
  }

finish:
  for (std::size_t k = 0; k < objects.size(); ++k) {
    ObjectOutcome& out = result.objects[k];
    out.final_position = state[k].p;
    out.displacement_mm = 1000.0 * (state[k].p - objects[k].centroid_offset.head<2>()).norm();
  }
  return result;
}

SimResult simulate_transport(const RobotModel& model, const Trajectory& trajectory,
                             const std::vector<ObjectSpec>& objects, const GroundTruthFriction& friction,
                             const SimSettings& settings) {
  if (trajectory.points.empty()) throw InvalidArgument("empty trajectory");
  if (trajectory.dof() != model.dof()) throw DimensionMismatch("trajectory dof does not match robot");
  if (trajectory.horizon() > 0 && settings.sim_dt > trajectory.t_step / 10.0 + 1e-15) {
    throw InvalidArgument("sim_dt must be <= t_step / 10");
  }
  const MotionSource source = [&](double t) {
    const JointState s = trajectory.state_at(t);
    return kin::propagate<double>(model, s.q, s.qd, s.qdd);
  };
  return simulate_motion(source, trajectory.duration(), model.gravity, objects, friction, settings);
}

double virtual_tilt(double mu_s_true, double increment) {
  if (!(mu_s_true >= 0.0 && mu_s_true < 2.0)) throw InvalidArgument("mu_s_true must be in [0, 2)");
  if (!(increment > 0.0)) throw InvalidArgument("increment must be positive");
  // Static plane tilted by theta: tangential demand g sin(theta) against
  // mu g cos(theta). The object starts sliding once tan(theta) >= mu.
  for (long k = 1;; ++k) {
    const double theta = k * increment;
    if (theta >= M_PI / 2.0) return theta;
    if (std::tan(theta) >= mu_s_true) return theta;
  }
}

namespace {

// RBJ biquad, direct form I.
class Biquad {
 public:
  static Biquad lowpass(double f0, double fs) { return make(f0, fs, false); }
  static Biquad highpass(double f0, double fs) { return make(f0, fs, true); }

  double operator()(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  static Biquad make(double f0, double fs, bool high) {
    const double w = 2.0 * M_PI * f0 / fs;
    const double alpha = std::sin(w) / (2.0 * M_SQRT1_2);
    const double c = std::cos(w);
    const double a0 = 1.0 + alpha;
    Biquad q;
    if (high) {
      q.b0_ = (1.0 + c) / 2.0 / a0;
      q.b1_ = -(1.0 + c) / a0;
    } else {
      q.b0_ = (1.0 - c) / 2.0 / a0;
      q.b1_ = (1.0 - c) / a0;
    }
    q.b2_ = q.b0_;
    q.a1_ = -2.0 * c / a0;
    q.a2_ = (1.0 - alpha) / a0;
    return q;
  }

  double b0_ = 0, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// Unit-RMS noise limited to [low, high] by fourth-order Butterworth sections.
std::vector<double> band_noise(std::size_t n, double low, double high, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Biquad hp1 = Biquad::highpass(low, fs), hp2 = Biquad::highpass(low, fs);
  Biquad lp1 = Biquad::lowpass(high, fs), lp2 = Biquad::lowpass(high, fs);
  std::vector<double> out(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lp2(lp1(hp2(hp1(gauss(rng)))));
    energy += out[i] * out[i];
  }
  const double rms = n ? std::sqrt(energy / n) : 0.0;
  if (rms > 0.0) {
    for (double& v : out) v /= rms;
  }
  return out;
}

}  // namespace

AudioClip synth_audio_from_speed(const SimResult& sim, const std::vector<double>& tray_speed, double dt,
                                 const SynthParams& params) {
  if (!(params.sample_rate > 0.0)) throw InvalidArgument("sample_rate must be positive");
  const double fs = params.sample_rate;
  // Clip length follows the motion, not the simulation, so trials of one
  // trajectory share a spectrogram geometry.
  const double span = tray_speed.empty() ? sim.duration : (tray_speed.size() - 1) * dt;
  const std::size_t n = static_cast<std::size_t>(std::llround((span + params.tail) * fs));

  std::mt19937_64 rng(params.seed);
  const std::vector<double> vibration = band_noise(n, params.vibration_low, params.vibration_high, fs, rng);
  const std::vector<double> burst = band_noise(n, params.burst_low, params.burst_high, fs, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  AudioClip clip;
  clip.sample_rate = fs;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i / fs;
    double speed = 0.0;
    if (!tray_speed.empty() && dt > 0.0) {
      const double x = t / dt;
      const std::size_t k = static_cast<std::size_t>(x);
      if (k + 1 < tray_speed.size()) {
        const double f = x - k;
        speed = (1.0 - f) * tray_speed[k] + f * tray_speed[k + 1];
      } else {
        speed = tray_speed.back();
      }
    }
    double slip_level = 0.0;
    if (sim.sim_dt > 0.0) {
      const std::size_t step = static_cast<std::size_t>(t / sim.sim_dt);
      for (const auto& obj : sim.objects) {
        if (step < obj.timeline.size() && obj.timeline[step].slipping) {
          slip_level = std::max(slip_level, 1.0 + obj.timeline[step].relative_speed / params.slip_speed_ref);
        }
      }
    }
    const double v = params.gain_vibration * speed * vibration[i] + params.gain_slip * slip_level * burst[i] +
                     params.sensor_noise * gauss(rng);
    clip.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return clip;
}

AudioClip synth_audio(const SimResult& sim, const RobotModel& model, const Trajectory& trajectory,
                      const SynthParams& params) {
  const double dt = 1.0 / params.sample_rate;
  const double span = trajectory.duration() + params.tail;
  const std::size_t n = static_cast<std::size_t>(std::llround(span / dt)) + 1;
  std::vector<double> speed(n);
  for (std::size_t i = 0; i < n; ++i) {
    const JointState s = trajectory.state_at(i * dt);
    speed[i] = ee_linear_velocity(model, s.q, s.qd).norm();
  }
  SynthParams p = params;
  p.tail = 0.0;  // already inside the speed series
  return synth_audio_from_speed(sim, speed, dt, p);
}

}  // namespace tray
