#pragma once

#include <filesystem>
#include <vector>

#include "montage/core.hpp"

namespace montage {

/// Mono float samples in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 22050;

  Seconds duration() const {
    return sample_rate > 0 ? static_cast<Seconds>(samples.size()) / sample_rate : 0.0;
  }
};

/// Reads RIFF/WAVE PCM (16/24/32-bit integer or 32-bit float), mixing all
/// channels down to mono.
AudioBuffer read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);

/// Linear-interpolation resampler with a box pre-filter when downsampling.
AudioBuffer resample(const AudioBuffer& in, int target_rate);

}  // namespace montage
