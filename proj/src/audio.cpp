#include "montage/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace montage {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ofstream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open audio file " + path.string());
  std::vector<unsigned char> data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw UserError(path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_size = 0;
  for (std::size_t pos = 12; pos + 8 <= data.size();) {
    const auto* chunk = data.data() + pos;
    std::size_t size = le32(chunk + 4);
    std::size_t body = pos + 8;
    size = std::min(size, data.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = le16(data.data() + body);
      channels = le16(data.data() + body + 2);
      rate = le32(data.data() + body + 4);
      bits = le16(data.data() + body + 14);
      if (format == 0xFFFE && size >= 26) format = le16(data.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      pcm = data.data() + body;
      pcm_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (!pcm || channels == 0 || rate == 0) throw UserError(path.string() + ": missing fmt or data chunk");
  const bool is_float = format == 3;
  if (!(format == 1 || is_float) || (is_float && bits != 32) ||
      (!is_float && bits != 16 && bits != 24 && bits != 32))
    throw UserError(path.string() + ": unsupported WAV encoding (need PCM 16/24/32 or float32)");

  const std::size_t bytes = bits / 8;
  const std::size_t frames = pcm_size / (bytes * channels);
  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + (f * channels + c) * bytes;
      double v;
      if (is_float) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t x = p[0] | (p[1] << 8) | (p[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = x / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      acc += v;
    }
    out.samples[f] = static_cast<float>(acc / channels);
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  out.write("RIFF", 4);
  put32(out, 36 + n * 2);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put32(out, static_cast<std::uint32_t>(audio.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.write("data", 4);
  put32(out, n * 2);
  for (float s : audio.samples) {
    double v = std::clamp(static_cast<double>(s), -1.0, 1.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * 32767.0))));
  }
}

AudioBuffer resample(const AudioBuffer& in, int target_rate) {
  if (in.sample_rate == target_rate || in.samples.empty()) {
    AudioBuffer out = in;
    out.sample_rate = target_rate;
    return out;
  }
  const double ratio = static_cast<double>(in.sample_rate) / target_rate;
  std::vector<float> src = in.samples;
  if (ratio > 1.0) {
    const auto width = static_cast<std::size_t>(std::ceil(ratio));
    std::vector<float> smooth(src.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      acc += src[i];
      if (i >= width) acc -= src[i - width];
      smooth[i] = static_cast<float>(acc / static_cast<double>(std::min(i + 1, width)));
    }
    // Re-centre the causal box filter.
    const std::size_t lag = width / 2;
    for (std::size_t i = 0; i + lag < smooth.size(); ++i) src[i] = smooth[i + lag];
  }
  AudioBuffer out;
  out.sample_rate = target_rate;
  const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(in.samples.size()) / ratio));
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * ratio;
    const auto k = static_cast<std::size_t>(x);
    const double frac = x - static_cast<double>(k);
    const float a = src[std::min(k, src.size() - 1)];
    const float b = src[std::min(k + 1, src.size() - 1)];
    out.samples[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

}  // namespace montage
