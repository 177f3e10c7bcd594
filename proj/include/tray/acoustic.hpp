#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tray/audio.hpp"

namespace tray {

struct BinnedSpectrogram {
  Eigen::MatrixXd magnitudes;  // time_bins x freq_bins, >= 0
  double time_bin = 0.0;       // s
  double freq_bin = 0.0;       // Hz
  double t0 = 0.0;             // s, start of the first time bin

  int time_bins() const { return static_cast<int>(magnitudes.rows()); }
  int freq_bins() const { return static_cast<int>(magnitudes.cols()); }
  bool same_geometry(const BinnedSpectrogram& other) const;
};

// Time bin k spans samples [round(k T fs), round((k+1) T fs)). Each bin is
// Hann-windowed and zero-padded to round(fs / freq_bin) points, so frequency
// cell c is the DFT line at c * freq_bin. Magnitudes are scaled so that the
// summed squares equal the windowed frame energy (one-sided).
// Throws ClipTooShort when the clip holds less than one time bin.
BinnedSpectrogram binned_spectrogram(const AudioClip& clip, double time_bin = 0.002,
                                     double freq_bin = 100.0);

struct NoiseGate {
  int half_width = 5;   // time bins on each side of the rolling window
  double n_std = 1.5;
};

// Spectral gating: per frequency cell, subtract
// max(rolling mean + n_std * rolling std, rolling max) of the noise profile
// and clamp at zero. Throws GeometryMismatch.
BinnedSpectrogram reduce_noise(const BinnedSpectrogram& signal, const BinnedSpectrogram& noise,
                               const NoiseGate& gate = {});

struct SlidingEvent {
  double t_sliding = 0.0;      // s
  double v_sliding_mag = 0.0;  // m/s
  double a_sliding_mag = 0.0;  // m/s^2
};

// Tray motion sampled on a uniform grid starting at t = 0.
struct MotionProfile {
  std::vector<double> t;
  std::vector<double> v_mag;
  std::vector<double> a_mag;

  double duration() const { return t.empty() ? 0.0 : t.back(); }
  // Linear interpolation, clamped at the ends.
  double v_at(double time) const;
  double a_at(double time) const;
  double time_of_max_velocity() const;
};

struct OnsetSettings {
  double k = 6.0;               // multiple of the rolling median
  int window = 25;              // preceding bins in the rolling median
  double floor_factor = 3.0;    // multiple of the global noise-profile median
};

// First unmasked bin whose summed magnitude exceeds k * median(previous
// `window` bins) and the absolute floor. Bins starting after the time of
// maximum velocity are masked. `noise_floor` is the global median of the
// noise profile's per-bin sums. Returns nullopt for no sliding.
std::optional<SlidingEvent> detect_onset(const BinnedSpectrogram& spec, const MotionProfile& profile,
                                         double noise_floor, const OnsetSettings& settings = {});

// Median over time bins of the per-bin summed magnitude.
double noise_floor_level(const BinnedSpectrogram& noise);

struct TrialOptions {
  double time_bin = 0.002;
  double freq_bin = 100.0;
  NoiseGate gate;
  OnsetSettings onset;
};

struct PairedTrials {
  std::vector<std::optional<SlidingEvent>> per_trial;  // one per with-object clip
  std::vector<SlidingEvent> unique_events;
};

// Averages the without-object spectrograms into the noise profile, gates and
// detects each with-object clip, and deduplicates identical (v, a) pairs.
PairedTrials pair_trials(const std::vector<AudioClip>& with_object,
                         const std::vector<AudioClip>& without_object, const MotionProfile& profile,
                         const TrialOptions& options = {});

}  // namespace tray
