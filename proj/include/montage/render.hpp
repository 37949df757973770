#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "montage/core.hpp"

namespace montage {

// EDL document, version 1:
//
//   { "version": 1,
//     "music": {"id", "path"},
//     "duration": <sum of clip durations>,
//     "entries": [ {"index", "source", "path", "t_in", "t_out", "offset",
//                   "shot", "spec"} ] }
//
// Entries are in output order; entry k starts at `offset` on the output axis
// and offsets abut (offset[k+1] = offset[k] + t_out[k] - t_in[k]).

inline constexpr int kEdlVersion = 1;

struct EdlEntry {
  Clip clip;
  std::filesystem::path path;
  Seconds offset = 0.0;
};

struct Edl {
  std::string music_id;
  std::filesystem::path music_path;
  Seconds duration = 0.0;
  std::vector<EdlEntry> entries;

  Timeline timeline() const;
};

/// Source paths come from `sources` (by id); unknown sources keep an empty path.
Edl export_edl(const ValidatedTimeline& timeline, const MediaRef& music, std::span<const MediaRef> sources = {});

Json to_json(const Edl& edl);
/// Rejects unknown versions and non-abutting offsets.
Edl parse_edl(const Json& j);

struct RenderOptions {
  std::size_t workers = 2;
  Seconds duration_tolerance = 0.1;
  /// Scratch directory for per-clip trims; defaults to <output>.parts.
  std::filesystem::path work_dir;
  int width = 1280;
  int height = 720;
  int fps = 25;
};

struct RenderResult {
  bool rendered = false;
  /// Why rendering was skipped, when it was.
  std::string notice;
  Seconds probed_duration = 0.0;
};

/// Re-encodes each clip, concatenates and muxes the music trimmed to the
/// timeline duration, then probes the result. Missing ffmpeg/ffprobe or
/// procedural sources give rendered = false with a notice.
RenderResult render_video(const Edl& edl, const std::filesystem::path& output, const RenderOptions& options = {});

/// Argument vectors of the documented command contract.
std::vector<std::string> trim_command(const EdlEntry& entry, const std::filesystem::path& out,
                                      const RenderOptions& options);
std::vector<std::string> concat_command(const std::filesystem::path& list, const Edl& edl,
                                        const std::filesystem::path& output);

}  // namespace montage
