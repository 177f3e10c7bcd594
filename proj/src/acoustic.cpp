#include "tray/acoustic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <set>

#include "tray/errors.hpp"

namespace tray {

namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  void execute() { fftw_execute(plan_); }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(values.begin(), values.begin() + mid));
  }
  return m;
}

double interpolate(const std::vector<double>& t, const std::vector<double>& y, double time) {
  if (t.empty()) throw InvalidArgument("empty motion profile");
  if (time <= t.front()) return y.front();
  if (time >= t.back()) return y.back();
  const auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t i = static_cast<std::size_t>(it - t.begin());
  const double w = (time - t[i - 1]) / (t[i] - t[i - 1]);
  return y[i - 1] + w * (y[i] - y[i - 1]);
}

}  // namespace

bool BinnedSpectrogram::same_geometry(const BinnedSpectrogram& other) const {
  return magnitudes.rows() == other.magnitudes.rows() && magnitudes.cols() == other.magnitudes.cols() &&
         time_bin == other.time_bin && freq_bin == other.freq_bin && t0 == other.t0;
}

BinnedSpectrogram binned_spectrogram(const AudioClip& clip, double time_bin, double freq_bin) {
  clip.validate();
  const double fs = clip.sample_rate;
  if (!(time_bin * fs >= 1.0)) throw InvalidArgument("time_bin must cover at least one sample");
  if (!(freq_bin > 0.0) || freq_bin > fs / 2.0) throw InvalidArgument("freq_bin out of range");

  const auto boundary = [&](long k) { return static_cast<long>(std::llround(k * time_bin * fs)); };
  const long total = static_cast<long>(clip.samples.size());
  long bins = static_cast<long>(std::floor(total / (time_bin * fs) + 1e-9));
  while (bins > 0 && boundary(bins) > total) --bins;
  if (bins < 1) throw ClipTooShort("clip shorter than one time bin");

  const int nfft = std::max(2, static_cast<int>(std::lround(fs / freq_bin)));
  const int cells = static_cast<int>(std::floor(fs / 2.0 / freq_bin + 1e-9));
  if (cells > nfft / 2 + 1) throw InvalidArgument("frequency grid finer than the transform");

  BinnedSpectrogram out;
  out.time_bin = time_bin;
  out.freq_bin = freq_bin;
  out.t0 = 0.0;
  out.magnitudes = Eigen::MatrixXd::Zero(bins, cells);

  RealFft fft(nfft);
  std::vector<double> window;
  for (long k = 0; k < bins; ++k) {
    const long begin = boundary(k);
    const long len = boundary(k + 1) - begin;
    if (len > nfft) throw InvalidArgument("time bin longer than the transform length");
    if (static_cast<long>(window.size()) != len) {
      window.resize(len);
      for (long n = 0; n < len; ++n) {
        window[n] = len > 1 ? 0.5 * (1.0 - std::cos(2.0 * M_PI * n / (len - 1))) : 1.0;
      }
    }
    double* in = fft.input();
    std::fill(in, in + nfft, 0.0);
    for (long n = 0; n < len; ++n) in[n] = clip.samples[begin + n] * window[n];
    fft.execute();
    const fftw_complex* X = fft.output();
    for (int c = 0; c < cells; ++c) {
      const double scale = std::sqrt((c == 0 ? 1.0 : 2.0) / nfft);
      out.magnitudes(k, c) = std::hypot(X[c][0], X[c][1]) * scale;
    }
  }
  return out;
}

BinnedSpectrogram reduce_noise(const BinnedSpectrogram& signal, const BinnedSpectrogram& noise,
                               const NoiseGate& gate) {
  if (!signal.same_geometry(noise)) {
    throw GeometryMismatch("signal and noise spectrograms differ in bin geometry");
  }
  if (gate.half_width < 0) throw InvalidArgument("half_width must be >= 0");
  BinnedSpectrogram out = signal;
  const int rows = signal.time_bins();
  for (int c = 0; c < signal.freq_bins(); ++c) {
    for (int r = 0; r < rows; ++r) {
      const int lo = std::max(0, r - gate.half_width);
      const int hi = std::min(rows - 1, r + gate.half_width);
      const auto seg = noise.magnitudes.col(c).segment(lo, hi - lo + 1);
      const double mean = seg.mean();
      const double var = (seg.array() - mean).square().mean();
      const double threshold = std::max(mean + gate.n_std * std::sqrt(var), seg.maxCoeff());
      out.magnitudes(r, c) = std::max(0.0, signal.magnitudes(r, c) - threshold);
    }
  }
  return out;
}

double MotionProfile::v_at(double time) const { return interpolate(t, v_mag, time); }
double MotionProfile::a_at(double time) const { return interpolate(t, a_mag, time); }

double MotionProfile::time_of_max_velocity() const {
  if (v_mag.empty()) throw InvalidArgument("empty motion profile");
  return t[std::max_element(v_mag.begin(), v_mag.end()) - v_mag.begin()];
}

double noise_floor_level(const BinnedSpectrogram& noise) {
  const Eigen::VectorXd sums = noise.magnitudes.rowwise().sum();
  return median(std::vector<double>(sums.data(), sums.data() + sums.size()));
}

std::optional<SlidingEvent> detect_onset(const BinnedSpectrogram& spec, const MotionProfile& profile,
                                         double noise_floor, const OnsetSettings& settings) {
  if (profile.t.size() != profile.v_mag.size() || profile.t.size() != profile.a_mag.size()) {
    throw InvalidArgument("motion profile columns differ in length");
  }
  const double t_mask = profile.time_of_max_velocity();
  const Eigen::VectorXd sums = spec.magnitudes.rowwise().sum();
  const double floor = settings.floor_factor * noise_floor;
  for (int b = 0; b < spec.time_bins(); ++b) {
    const double start = spec.t0 + b * spec.time_bin;
    if (start > t_mask) break;
    const int lo = std::max(0, b - settings.window);
    const double med = median(std::vector<double>(sums.data() + lo, sums.data() + b));
    if (sums[b] > settings.k * med && sums[b] > floor) {
      const double center = start + 0.5 * spec.time_bin;
      return SlidingEvent{start, profile.v_at(center), profile.a_at(center)};
    }
  }
  return std::nullopt;
}

PairedTrials pair_trials(const std::vector<AudioClip>& with_object,
                         const std::vector<AudioClip>& without_object, const MotionProfile& profile,
                         const TrialOptions& options) {
  if (with_object.empty() || without_object.empty()) {
    throw InvalidArgument("pair_trials needs at least one clip with and without the object");
  }
  BinnedSpectrogram noise = binned_spectrogram(without_object.front(), options.time_bin, options.freq_bin);
  for (std::size_t i = 1; i < without_object.size(); ++i) {
    const BinnedSpectrogram s = binned_spectrogram(without_object[i], options.time_bin, options.freq_bin);
    if (!s.same_geometry(noise)) throw GeometryMismatch("noise trials differ in length");
    noise.magnitudes += s.magnitudes;
  }
  noise.magnitudes /= static_cast<double>(without_object.size());
  const double floor = noise_floor_level(noise);

  PairedTrials out;
  std::set<std::pair<double, double>> seen;
  for (const AudioClip& clip : with_object) {
    const BinnedSpectrogram s = binned_spectrogram(clip, options.time_bin, options.freq_bin);
    const auto event = detect_onset(reduce_noise(s, noise, options.gate), profile, floor, options.onset);
    out.per_trial.push_back(event);
    if (event && seen.emplace(event->v_sliding_mag, event->a_sliding_mag).second) {
      out.unique_events.push_back(*event);
    }
  }
  return out;
}

}  // namespace tray
