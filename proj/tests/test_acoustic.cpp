#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tray/acoustic.hpp"
#include "tray/audio.hpp"
#include "tray/errors.hpp"

using namespace tray;

namespace {

constexpr double kFs = 44100.0;

AudioClip noise_clip(double seconds, double rms, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, rms);
  AudioClip c;
  c.samples.resize(static_cast<std::size_t>(seconds * kFs));
  for (double& s : c.samples) s = n(rng);
  return c;
}

void add_tone(AudioClip& c, double freq, double amp, double from, double to) {
  for (std::size_t i = static_cast<std::size_t>(from * kFs); i < c.samples.size() && i < to * kFs; ++i) {
    c.samples[i] += amp * std::sin(2 * M_PI * freq * i / kFs);
  }
}

// Speed ramps up to a peak at t = 0.5 s, then back down.
MotionProfile triangle_profile() {
  MotionProfile m;
  for (int i = 0; i <= 500; ++i) {
    const double t = i * 0.002;
    m.t.push_back(t);
    m.v_mag.push_back(t < 0.5 ? 2.0 * t : 2.0 * (1.0 - t));
    m.a_mag.push_back(2.0);
  }
  return m;
}

}  // namespace

TEST_CASE("bin geometry") {
  const BinnedSpectrogram s = binned_spectrogram(noise_clip(1.0, 0.01, 1));
  CHECK(s.time_bins() == 500);
  CHECK(s.freq_bins() == 220);
  CHECK(s.time_bin == 0.002);
  CHECK(s.freq_bin == 100.0);
}

TEST_CASE("a pure tone lands in its frequency cell") {
  AudioClip c;
  c.samples.assign(44100, 0.0);
  add_tone(c, 1000.0, 0.5, 0.0, 1.0);
  const BinnedSpectrogram s = binned_spectrogram(c);
  for (int k = 10; k < 20; ++k) {
    Eigen::Index peak;
    const double top = s.magnitudes.row(k).maxCoeff(&peak);
    CHECK(peak == 10);
    for (int f = 0; f < s.freq_bins(); ++f) {
      // Hann main lobe of an 88-sample frame spans about +-10 cells.
      if (std::abs(f - 10) > 11) CHECK(20 * std::log10(top / std::max(s.magnitudes(k, f), 1e-300)) >= 20.0);
    }
  }
}

TEST_CASE("silence gives zero magnitudes") {
  AudioClip c;
  c.samples.assign(4410, 0.0);
  CHECK(binned_spectrogram(c).magnitudes.maxCoeff() == 0.0);
}

TEST_CASE("summed squares track the windowed frame energy") {
  const AudioClip c = noise_clip(0.2, 0.1, 2);
  const BinnedSpectrogram s = binned_spectrogram(c);
  for (int k = 0; k < s.time_bins(); ++k) {
    const long b = std::lround(k * 0.002 * kFs), e = std::lround((k + 1) * 0.002 * kFs);
    const long L = e - b;
    double energy = 0.0;
    for (long i = 0; i < L; ++i) {
      const double w = 0.5 - 0.5 * std::cos(2 * M_PI * i / (L - 1));
      energy += std::pow(w * c.samples[b + i], 2);
    }
    CHECK(s.magnitudes.row(k).squaredNorm() == doctest::Approx(energy).epsilon(0.1));
  }
}

TEST_CASE("a shift of five bins shifts the spectrogram by five rows") {
  const AudioClip c = noise_clip(0.3, 0.1, 3);
  AudioClip shifted;
  shifted.samples.assign(441, 0.0);
  shifted.samples.insert(shifted.samples.end(), c.samples.begin(), c.samples.end());
  const BinnedSpectrogram a = binned_spectrogram(c), b = binned_spectrogram(shifted);
  REQUIRE(b.time_bins() == a.time_bins() + 5);
  CHECK((b.magnitudes.bottomRows(a.time_bins()) - a.magnitudes).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b.magnitudes.topRows(5).maxCoeff() == 0.0);
}

TEST_CASE("clips shorter than one bin are rejected") {
  AudioClip c;
  c.samples.assign(50, 0.1);
  CHECK_THROWS_AS(binned_spectrogram(c), ClipTooShort);
}

TEST_CASE("gating a profile against itself removes everything") {
  const BinnedSpectrogram n = binned_spectrogram(noise_clip(0.5, 0.05, 4));
  const BinnedSpectrogram r = reduce_noise(n, n);
  CHECK(r.magnitudes.sum() <= 0.05 * n.magnitudes.sum());
  CHECK(r.magnitudes.maxCoeff() == 0.0);
}

TEST_CASE("gating keeps a burst far above the noise") {
  const BinnedSpectrogram noise = binned_spectrogram(noise_clip(0.5, 0.01, 5));
  AudioClip sig = noise_clip(0.5, 0.01, 6);
  add_tone(sig, 5000.0, 0.3, 0.2, 0.3);
  const BinnedSpectrogram r = reduce_noise(binned_spectrogram(sig), noise);
  const double inside = r.magnitudes.middleRows(105, 40).sum();
  const double outside = r.magnitudes.topRows(95).sum() + r.magnitudes.bottomRows(95).sum();
  CHECK(inside > 0.0);
  CHECK(inside / 40.0 > 50.0 * outside / 190.0);
}

TEST_CASE("mismatched geometry is rejected") {
  const BinnedSpectrogram a = binned_spectrogram(noise_clip(0.5, 0.01, 7));
  const BinnedSpectrogram b = binned_spectrogram(noise_clip(0.4, 0.01, 8));
  CHECK_THROWS_AS(reduce_noise(a, b), GeometryMismatch);
}

TEST_CASE("onset detection") {
  const MotionProfile profile = triangle_profile();
  const BinnedSpectrogram noise = binned_spectrogram(noise_clip(1.0, 0.01, 9));
  const double floor = noise_floor_level(noise);
  CHECK(floor > 0.0);

  SUBCASE("quiet recording has no onset") {
    const BinnedSpectrogram quiet = reduce_noise(binned_spectrogram(noise_clip(1.0, 0.01, 10)), noise);
    CHECK_FALSE(detect_onset(quiet, profile, floor));
  }
  SUBCASE("burst before the velocity peak") {
    AudioClip sig = noise_clip(1.0, 0.01, 11);
    add_tone(sig, 5000.0, 0.3, 0.3, 1.0);
    const auto e = detect_onset(reduce_noise(binned_spectrogram(sig), noise), profile, floor);
    REQUIRE(e);
    CHECK(std::abs(e->t_sliding - 0.3) <= 0.002 + 1e-12);
    CHECK(e->v_sliding_mag == doctest::Approx(profile.v_at(e->t_sliding + 0.001)));
    CHECK(e->a_sliding_mag == doctest::Approx(2.0));
  }
  SUBCASE("bursts after the velocity peak are masked") {
    AudioClip sig = noise_clip(1.0, 0.01, 12);
    add_tone(sig, 5000.0, 0.3, 0.6, 1.0);
    CHECK_FALSE(detect_onset(reduce_noise(binned_spectrogram(sig), noise), profile, floor));
  }
}

TEST_CASE("paired trials deduplicate identical events") {
  const MotionProfile profile = triangle_profile();
  AudioClip sig = noise_clip(1.0, 0.01, 13);
  add_tone(sig, 5000.0, 0.3, 0.25, 1.0);
  const PairedTrials p = pair_trials({sig, sig, noise_clip(1.0, 0.01, 14)},
                                     {noise_clip(1.0, 0.01, 15), noise_clip(1.0, 0.01, 16)}, profile);
  REQUIRE(p.per_trial.size() == 3);
  CHECK(p.per_trial[0]);
  CHECK_FALSE(p.per_trial[2]);
  CHECK(p.unique_events.size() == 1);
}

TEST_CASE("motion profile interpolation") {
  const MotionProfile m = triangle_profile();
  CHECK(m.time_of_max_velocity() == doctest::Approx(0.5));
  CHECK(m.v_at(0.123) == doctest::Approx(0.246));
  CHECK(m.v_at(-1.0) == 0.0);
  CHECK(m.v_at(5.0) == doctest::Approx(0.0).scale(1.0));
}
