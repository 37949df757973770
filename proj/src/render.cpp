#include "montage/render.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "montage/frames.hpp"
#include "montage/parallel.hpp"
#include "montage/process.hpp"

namespace montage {
namespace {

std::string secs(Seconds t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

}  // namespace

Timeline Edl::timeline() const {
  Timeline t;
  t.music = music_id;
  for (const auto& e : entries) t.clips.push_back(e.clip);
  return t;
}

Edl export_edl(const ValidatedTimeline& validated, const MediaRef& music, std::span<const MediaRef> sources) {
  const auto& t = validated.timeline();
  Edl edl;
  edl.music_id = t.music.empty() ? music.id : t.music;
  edl.music_path = music.path;
  Seconds offset = 0.0;
  for (const auto& c : t.clips) {
    EdlEntry e{c, {}, offset};
    for (const auto& s : sources)
      if (s.id == c.source) e.path = s.path;
    offset += c.duration();
    edl.entries.push_back(std::move(e));
  }
  edl.duration = offset;
  return edl;
}

Json to_json(const Edl& edl) {
  Json entries = Json::array();
  for (std::size_t i = 0; i < edl.entries.size(); ++i) {
    const auto& e = edl.entries[i];
    entries.push_back({{"index", i},
                       {"source", e.clip.source},
                       {"path", e.path.generic_string()},
                       {"t_in", e.clip.t_in},
                       {"t_out", e.clip.t_out},
                       {"offset", e.offset},
                       {"shot", e.clip.origin_shot},
                       {"spec", e.clip.spec_id}});
  }
  return {{"version", kEdlVersion},
          {"music", {{"id", edl.music_id}, {"path", edl.music_path.generic_string()}}},
          {"duration", edl.duration},
          {"entries", entries}};
}

Edl parse_edl(const Json& j) {
  if (j.value("version", 0) != kEdlVersion)
    throw UserError("unsupported EDL version " + j.value("version", Json(nullptr)).dump());
  Edl edl;
  edl.music_id = j.at("music").at("id").get<std::string>();
  edl.music_path = j.at("music").at("path").get<std::string>();
  edl.duration = j.at("duration").get<double>();
  Seconds expect = 0.0;
  for (const auto& x : j.at("entries")) {
    EdlEntry e;
    e.clip.source = x.at("source").get<std::string>();
    e.clip.t_in = x.at("t_in").get<double>();
    e.clip.t_out = x.at("t_out").get<double>();
    e.clip.origin_shot = x.value("shot", std::string{});
    e.clip.spec_id = x.value("spec", std::string{});
    e.path = x.value("path", std::string{});
    e.offset = x.at("offset").get<double>();
    if (std::abs(e.offset - expect) > 1e-6)
      throw UserError("EDL entry " + std::to_string(edl.entries.size()) + " does not abut the previous entry");
    if (e.clip.t_out <= e.clip.t_in) throw UserError("EDL entry has non-positive length");
    expect = e.offset + e.clip.duration();
    edl.entries.push_back(std::move(e));
  }
  if (std::abs(expect - edl.duration) > 1e-6) throw UserError("EDL duration does not match its entries");
  return edl;
}

std::vector<std::string> trim_command(const EdlEntry& e, const std::filesystem::path& out, const RenderOptions& o) {
  char vf[192];
  std::snprintf(vf, sizeof vf,
                "scale=%d:%d:force_original_aspect_ratio=decrease,pad=%d:%d:(ow-iw)/2:(oh-ih)/2,setsar=1,fps=%d",
                o.width, o.height, o.width, o.height, o.fps);
  return {"ffmpeg", "-v",      "error", "-nostdin", "-y",      "-ss",     secs(e.clip.t_in), "-i",
          e.path.string(), "-t", secs(e.clip.duration()), "-an", "-vf", vf, "-c:v", "libx264", "-preset",
          "veryfast", "-pix_fmt", "yuv420p", out.string()};
}

std::vector<std::string> concat_command(const std::filesystem::path& list, const Edl& edl,
                                        const std::filesystem::path& output) {
  return {"ffmpeg", "-v",    "error", "-nostdin", "-y",   "-f",          "concat", "-safe",  "0",
          "-i",     list.string(), "-i", edl.music_path.string(), "-map", "0:v:0", "-map", "1:a:0",
          "-c:v",   "copy",  "-c:a",  "aac",      "-t",   secs(edl.duration), output.string()};
}

RenderResult render_video(const Edl& edl, const std::filesystem::path& output, const RenderOptions& options) {
  if (edl.entries.empty()) throw PreconditionError("refusing to render an empty timeline");
  RenderResult r;
  if (!find_executable("ffmpeg") || !find_executable("ffprobe")) {
    r.notice = "ffmpeg/ffprobe not found on PATH; render skipped, EDL written";
    spdlog::warn("{}", r.notice);
    return r;
  }
  for (const auto& e : edl.entries) {
    if (e.path.empty() || is_synthetic_video(e.path)) {
      r.notice = "source " + e.clip.source + " is procedural or has no path; render skipped, EDL written";
      spdlog::warn("{}", r.notice);
      return r;
    }
  }

  const auto work = options.work_dir.empty() ? std::filesystem::path(output.string() + ".parts") : options.work_dir;
  std::filesystem::create_directories(work);
  if (output.has_parent_path()) std::filesystem::create_directories(output.parent_path());
  std::vector<std::filesystem::path> parts(edl.entries.size());
  parallel_for(edl.entries.size(), options.workers, [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%04zu.mp4", i);
    parts[i] = work / name;
    auto res = run_process(trim_command(edl.entries[i], parts[i], options));
    if (res.exit_code != 0)
      throw RenderError("ffmpeg trim of entry " + std::to_string(i) + " failed (exit " +
                        std::to_string(res.exit_code) + "): " + res.err);
  });

  const auto list = work / "concat.txt";
  {
    std::ofstream out(list);
    for (const auto& p : parts) out << "file '" << std::filesystem::absolute(p).string() << "'\n";
  }
  auto res = run_process(concat_command(list, edl, output));
  if (res.exit_code != 0)
    throw RenderError("ffmpeg concat failed (exit " + std::to_string(res.exit_code) + "): " + res.err);

  r.probed_duration = probe_duration(output);
  if (std::abs(r.probed_duration - edl.duration) > options.duration_tolerance)
    throw RenderError("rendered duration " + secs(r.probed_duration) + " s differs from expected " +
                      secs(edl.duration) + " s");
  r.rendered = true;
  return r;
}

}  // namespace montage
