#pragma once

#include <string>
#include <vector>

namespace tray {

struct AudioClip {
  std::vector<double> samples;  // normalized to [-1, 1]
  double sample_rate = 44100.0;

  double duration() const { return samples.size() / sample_rate; }
  void validate() const;
};

// 16-bit PCM mono. Samples outside [-1, 1] are clipped.
void write_wav(const std::string& path, const AudioClip& clip);

// The clip as it reads back after write_wav.
AudioClip quantize_pcm16(const AudioClip& clip);

// 16-bit PCM; multi-channel input is downmixed by averaging.
AudioClip read_wav(const std::string& path);

}  // namespace tray
