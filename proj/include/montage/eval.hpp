#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "montage/audio.hpp"
#include "montage/audio_parse.hpp"
#include "montage/core.hpp"
#include "montage/footage.hpp"
#include "montage/sidecar.hpp"

namespace montage {

/// Clip boundaries on the output axis, excluding 0 and the end.
std::vector<Seconds> cut_times(const Timeline& timeline);

struct HarmonyReport {
  Seconds threshold = 0.1;
  std::vector<Seconds> cuts;
  /// Distance from each cut to its nearest keypoint (+inf without keypoints).
  std::vector<Seconds> offsets;
  double aligned_fraction = 0.0;
  /// aligned_fraction computed against the keypoints of one kind only.
  std::map<std::string, double> by_kind;
};

/// A timeline without interior cuts scores 1 (nothing is misaligned).
HarmonyReport av_harmony(const Timeline& timeline, const std::vector<SoundKeypoint>& keypoints,
                         Seconds threshold = 0.1);

inline const std::vector<Seconds> kHarmonySweep{0.05, 0.1, 0.2};

std::vector<HarmonyReport> harmony_sweep(const Timeline& timeline, const std::vector<SoundKeypoint>& keypoints,
                                         const std::vector<Seconds>& thresholds = kHarmonySweep);

/// threshold,cuts,aligned,aligned_fraction[,<kind>...]
std::string sweep_csv(const std::vector<HarmonyReport>& sweep);

void to_json(Json& j, const HarmonyReport& r);

struct ClickTrackParams {
  double bpm = 120.0;
  Seconds length = 30.0;
  int sample_rate = 22050;
  Seconds lead_in = 0.25;
  int meter = 4;
  /// Section starts (seconds); the pad pitch changes at each one and a noise
  /// layer enters from the last one on (when there are at least 3 sections).
  std::vector<Seconds> sections{0.0};
};

struct ClickTrack {
  AudioBuffer audio;
  std::vector<Seconds> beats;
  std::vector<Seconds> downbeats;
};

/// Decaying sine clicks (accented downbeats), a quiet pad and optional noise.
/// Noise comes from a seeded generator, so output is a function of (params, seed).
ClickTrack synthesize_click_track(const ClickTrackParams& params, std::uint64_t seed = 0);

struct SyntheticParams {
  std::size_t n_scenes = 5;
  std::size_t shots_per_scene = 4;
  double bpm = 120.0;
  Seconds music_len = 30.0;
};

struct SyntheticProject {
  std::uint64_t seed = 0;
  SyntheticParams params;
  GroundTruth truth;
  std::vector<Seconds> boundaries;
  ClickTrack music;
  std::vector<SubtitleLine> subtitles;
  Instruction instruction;
};

SyntheticProject generate_synthetic_project(std::uint64_t seed, const SyntheticParams& params = {});

/// Writes footage.json (ground truth, doubling as the procedural video),
/// footage.boundaries.json, music.wav, subtitles.srt and manifest.json.
/// Returns the manifest path.
std::filesystem::path write_synthetic_project(const SyntheticProject& project, const std::filesystem::path& dir);

std::string format_srt(const std::vector<SubtitleLine>& lines);

}  // namespace montage
