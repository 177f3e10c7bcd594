#include "tray/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "tray/errors.hpp"

namespace tray {

void AudioClip::validate() const {
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample_rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw InvalidArgument("audio samples must be finite");
  }
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& f, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::string& path, const AudioClip& clip) {
  clip.validate();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path + " for writing");
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(clip.sample_rate));
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVEfmt ", 8);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, rate);
  put_u32(f, rate * 2);
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (double s : clip.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put_u16(f, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  if (!f) throw InvalidArgument("failed writing " + path);
}

AudioClip quantize_pcm16(const AudioClip& clip) {
  AudioClip out = clip;
  for (double& s : out.samples) s = static_cast<double>(std::lround(std::clamp(s, -1.0, 1.0) * 32767.0)) / 32767.0;
  return out;
}

AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InvalidArgument(path + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int channels = 0;
  std::uint32_t rate = 0;
  int bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw InvalidArgument(path + ": truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      if (get_u16(chunk + 8) != 1) throw InvalidArgument(path + ": only PCM is supported");
      channels = get_u16(chunk + 10);
      rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (channels <= 0 || rate == 0 || data == nullptr) throw InvalidArgument(path + ": missing fmt or data chunk");
  if (bits != 16) throw InvalidArgument(path + ": only 16-bit PCM is supported");

  AudioClip clip;
  clip.sample_rate = rate;
  const std::size_t frames = data_size / (2 * channels);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      sum += static_cast<std::int16_t>(get_u16(data + 2 * (i * channels + c))) / 32767.0;
    }
    clip.samples[i] = sum / channels;
  }
  return clip;
}

}  // namespace tray
