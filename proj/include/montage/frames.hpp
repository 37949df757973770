#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "montage/core.hpp"
#include "montage/sidecar.hpp"

namespace montage {

/// Packed 8-bit RGB, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  bool empty() const { return rgb.empty(); }
  static Image solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

struct Frame {
  Seconds t = 0.0;
  Image image;
};

/// Mean Rec.601 luma in [0, 1].
double mean_luma(const Image& image);

/// Mean absolute luma difference in [0, 1]; images must share dimensions.
double frame_difference(const Image& a, const Image& b);

/// Content hash of the pixels (and dimensions).
std::string image_hash(const Image& image);

/// 16 (hue) x 4 (saturation) x 4 (value) histogram, normalized to sum 1.
using HsvHistogram = std::array<double, 256>;
HsvHistogram hsv_histogram(const Image& image);

/// Hellinger form of the Bhattacharyya distance, in [0, 1].
double histogram_distance(const HsvHistogram& a, const HsvHistogram& b);

/// Decoded access to video frames.
class FrameSource {
 public:
  virtual ~FrameSource() = default;

  /// Frames at t0 + k / fps for every such time below t1, scaled so the
  /// short side is `short_side` pixels.
  virtual std::vector<Frame> sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                                    int short_side) const = 0;

  /// Writes JPEG stills at `times` into `dir` for network providers. Sources
  /// that cannot encode return an empty list.
  virtual std::vector<std::filesystem::path> export_stills(const MediaRef& video, const std::vector<Seconds>& times,
                                                           const std::filesystem::path& dir) const;
};

/// Frames produced by a callback; used for tests.
class CallbackFrameSource : public FrameSource {
 public:
  using Render = std::function<Image(const MediaRef& video, Seconds t, int short_side)>;
  explicit CallbackFrameSource(Render render) : render_(std::move(render)) {}

  std::vector<Frame> sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                            int short_side) const override;

 private:
  Render render_;
};

/// Procedural video described by a ground-truth document: every shot is a
/// tinted stripe pattern whose brightness follows the per-frame luma and
/// whose stripes drift at the per-frame motion rate.
class SyntheticVideoSource : public FrameSource {
 public:
  explicit SyntheticVideoSource(std::shared_ptr<const GroundTruth> truth) : truth_(std::move(truth)) {}

  std::vector<Frame> sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                            int short_side) const override;
  Image render(Seconds t, int short_side) const;

 private:
  std::shared_ptr<const GroundTruth> truth_;
};

/// Decodes through an ffmpeg subprocess (rawvideo rgb24 on stdout).
class FfmpegFrameSource : public FrameSource {
 public:
  std::vector<Frame> sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                            int short_side) const override;
  std::vector<std::filesystem::path> export_stills(const MediaRef& video, const std::vector<Seconds>& times,
                                                   const std::filesystem::path& dir) const override;
};

/// Width and height reported by ffprobe for the first video stream.
std::pair<int, int> probe_dimensions(const std::filesystem::path& path);

/// Container duration reported by ffprobe.
Seconds probe_duration(const std::filesystem::path& path);

/// Procedural videos are ground-truth JSON documents; everything else is
/// decoded through ffmpeg.
bool is_synthetic_video(const std::filesystem::path& path);

}  // namespace montage
