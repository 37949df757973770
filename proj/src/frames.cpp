#include "montage/frames.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "montage/hash.hpp"
#include "montage/process.hpp"

namespace montage {
namespace {

constexpr double kPi = 3.14159265358979323846;
/// Below this HSV value hue and saturation are treated as undefined.
constexpr double kDarkValue = 0.1;

double luma_of(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h / 60.0)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  auto q = [&](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u + m, 0.0, 1.0) * 255.0)); };
  return {q(r), q(g), q(b)};
}

std::vector<Seconds> sample_times(Seconds t0, Seconds t1, double fps) {
  std::vector<Seconds> ts;
  if (fps <= 0) throw PreconditionError("frame sampling rate must be positive");
  for (std::size_t k = 0;; ++k) {
    const Seconds t = t0 + static_cast<double>(k) / fps;
    if (t >= t1 - 1e-9) break;
    ts.push_back(t);
  }
  return ts;
}

std::string require_tool(const char* name) {
  if (!find_executable(name))
    throw UserError(std::string(name) + " not found on PATH; it is needed to decode video");
  return name;
}

std::string fmt_seconds(Seconds t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

}  // namespace

Image Image::solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

double mean_luma(const Image& image) {
  if (image.rgb.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i + 2 < image.rgb.size(); i += 3) s += luma_of(image.rgb[i], image.rgb[i + 1], image.rgb[i + 2]);
  return s / static_cast<double>(image.rgb.size() / 3);
}

double frame_difference(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw PreconditionError("frame dimensions differ");
  if (a.rgb.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i + 2 < a.rgb.size(); i += 3)
    s += std::abs(luma_of(a.rgb[i], a.rgb[i + 1], a.rgb[i + 2]) - luma_of(b.rgb[i], b.rgb[i + 1], b.rgb[i + 2]));
  return s / static_cast<double>(a.rgb.size() / 3);
}

std::string image_hash(const Image& image) {
  std::string blob = std::to_string(image.width) + "x" + std::to_string(image.height) + ":";
  blob.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return short_hash(blob);
}

HsvHistogram hsv_histogram(const Image& image) {
  HsvHistogram h{};
  const std::size_t n = image.rgb.size() / 3;
  if (n == 0) return h;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = image.rgb[3 * i] / 255.0, g = image.rgb[3 * i + 1] / 255.0, b = image.rgb[3 * i + 2] / 255.0;
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    double hue = 0.0;
    if (d > 0) {
      if (mx == r)
        hue = 60.0 * std::fmod((g - b) / d, 6.0);
      else if (mx == g)
        hue = 60.0 * ((b - r) / d + 2.0);
      else
        hue = 60.0 * ((r - g) / d + 4.0);
      if (hue < 0) hue += 360.0;
    }
    double sat = mx > 0 ? d / mx : 0.0;
    if (mx < kDarkValue) hue = sat = 0.0;
    const int hb = std::min(15, static_cast<int>(hue / 22.5));
    const int sb = std::min(3, static_cast<int>(sat * 4.0));
    const int vb = std::min(3, static_cast<int>(mx * 4.0));
    h[static_cast<std::size_t>(hb * 16 + sb * 4 + vb)] += 1.0;
  }
  for (auto& x : h) x /= static_cast<double>(n);
  return h;
}

double histogram_distance(const HsvHistogram& a, const HsvHistogram& b) {
  double bc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) bc += std::sqrt(a[i] * b[i]);
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

std::vector<std::filesystem::path> FrameSource::export_stills(const MediaRef&, const std::vector<Seconds>&,
                                                              const std::filesystem::path&) const {
  return {};
}

std::vector<Frame> CallbackFrameSource::sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                                               int short_side) const {
  std::vector<Frame> out;
  for (Seconds t : sample_times(t0, std::min(t1, video.duration), fps)) out.push_back({t, render_(video, t, short_side)});
  return out;
}

Image SyntheticVideoSource::render(Seconds t, int short_side) const {
  const int h = std::max(2, short_side);
  const int w = std::max(2, (h * 16 / 9) & ~1);
  const TruthShot* shot = truth_->shot_at("", t);
  if (!shot) return Image::solid(w, h, 0, 0, 0);
  const auto index = static_cast<double>(shot - truth_->shots.data());
  TruthFrame tf;
  if (!shot->frames.empty()) tf = shot->frames[GroundTruth::frame_index(*shot, t, truth_->fps)];

  // Golden-angle hue steps keep neighbouring shots in different hue bins;
  // snapping to the bin centre keeps quantization from flipping bins.
  const double hue = (std::floor(std::fmod(index * 137.508, 360.0) / 22.5) + 0.5) * 22.5;
  const double sat = tf.luma >= 0.97 ? 0.0 : 0.55;
  const double phase = t * tf.motion * 4.0;
  const double period = std::max(4.0, h / 6.0);
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double stripe = std::sin(2.0 * kPi * ((x + y) / period + phase));
      const double amp = std::min(0.08, std::min(tf.luma, 1.0 - tf.luma));
      const auto px = hsv_to_rgb(hue, sat, std::clamp(tf.luma + amp * stripe, 0.0, 1.0));
      const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
      img.rgb[o] = px[0];
      img.rgb[o + 1] = px[1];
      img.rgb[o + 2] = px[2];
    }
  }
  return img;
}

std::vector<Frame> SyntheticVideoSource::sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                                                int short_side) const {
  std::vector<Frame> out;
  const Seconds end = std::min(t1, video.duration > 0 ? video.duration : truth_->duration);
  for (Seconds t : sample_times(t0, end, fps)) out.push_back({t, render(t, short_side)});
  return out;
}

std::pair<int, int> probe_dimensions(const std::filesystem::path& path) {
  auto res = run_process({require_tool("ffprobe"), "-v", "error", "-select_streams", "v:0", "-show_entries",
                          "stream=width,height", "-of", "json", path.string()});
  if (res.exit_code != 0) throw UserError("ffprobe failed on " + path.string() + ": " + res.err);
  auto j = Json::parse(res.out, nullptr, false);
  if (j.is_discarded() || !j.contains("streams") || j["streams"].empty())
    throw UserError(path.string() + " has no decodable video stream");
  return {j["streams"][0].value("width", 0), j["streams"][0].value("height", 0)};
}

Seconds probe_duration(const std::filesystem::path& path) {
  auto res = run_process({require_tool("ffprobe"), "-v", "error", "-show_entries", "format=duration", "-of", "json",
                          path.string()});
  if (res.exit_code != 0) throw UserError("ffprobe failed on " + path.string() + ": " + res.err);
  auto j = Json::parse(res.out, nullptr, false);
  if (j.is_discarded() || !j.contains("format")) throw UserError("cannot read duration of " + path.string());
  const auto& d = j["format"]["duration"];
  return d.is_string() ? std::stod(d.get<std::string>()) : d.get<double>();
}

std::vector<Frame> FfmpegFrameSource::sample(const MediaRef& video, Seconds t0, Seconds t1, double fps,
                                             int short_side) const {
  auto [w, h] = probe_dimensions(video.path);
  if (w <= 0 || h <= 0) throw UserError("invalid frame size for " + video.path.string());
  int ow, oh;
  if (h <= w) {
    oh = short_side;
    ow = std::max(2, static_cast<int>(std::lround(static_cast<double>(w) * short_side / h / 2.0)) * 2);
  } else {
    ow = short_side;
    oh = std::max(2, static_cast<int>(std::lround(static_cast<double>(h) * short_side / w / 2.0)) * 2);
  }
  char filter[128];
  std::snprintf(filter, sizeof filter, "fps=%g,scale=%d:%d", fps, ow, oh);
  auto res = run_process({require_tool("ffmpeg"), "-v", "error", "-nostdin", "-ss", fmt_seconds(t0), "-i",
                          video.path.string(), "-t", fmt_seconds(t1 - t0), "-vf", filter, "-f", "rawvideo",
                          "-pix_fmt", "rgb24", "-"});
  if (res.exit_code != 0) throw UserError("ffmpeg could not decode " + video.path.string() + ": " + res.err);
  const std::size_t frame_bytes = static_cast<std::size_t>(ow) * oh * 3;
  const auto times = sample_times(t0, t1, fps);
  std::vector<Frame> out;
  for (std::size_t k = 0; (k + 1) * frame_bytes <= res.out.size() && k < times.size(); ++k) {
    Frame f;
    f.t = times[k];
    f.image.width = ow;
    f.image.height = oh;
    f.image.rgb.assign(res.out.begin() + static_cast<long>(k * frame_bytes),
                       res.out.begin() + static_cast<long>((k + 1) * frame_bytes));
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<std::filesystem::path> FfmpegFrameSource::export_stills(const MediaRef& video,
                                                                    const std::vector<Seconds>& times,
                                                                    const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (Seconds t : times) {
    char name[96];
    std::snprintf(name, sizeof name, "%s_%08lld.jpg", video.id.c_str(), static_cast<long long>(std::llround(t * 1000)));
    auto path = dir / name;
    if (!std::filesystem::exists(path)) {
      auto res = run_process({require_tool("ffmpeg"), "-v", "error", "-nostdin", "-y", "-ss", fmt_seconds(t), "-i",
                              video.path.string(), "-frames:v", "1", "-vf", "scale=-2:360", path.string()});
      if (res.exit_code != 0) throw UserError("ffmpeg could not extract a still from " + video.path.string());
    }
    out.push_back(path);
  }
  return out;
}

bool is_synthetic_video(const std::filesystem::path& path) { return path.extension() == ".json"; }

}  // namespace montage
