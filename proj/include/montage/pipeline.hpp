#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "montage/audio_parse.hpp"
#include "montage/core.hpp"
#include "montage/editor.hpp"
#include "montage/footage.hpp"
#include "montage/playwriter.hpp"
#include "montage/reviewer.hpp"

namespace montage {

class Provider;

// Manifest (JSON, version 1). Relative paths resolve against the manifest's
// directory.
//
//   { "version": 1, "name": "...", "seed": 7,
//     "videos": [ {"id", "path", "boundaries"?} ],
//     "music": {"id", "path"},
//     "subtitles": "subs.srt"?,
//     "truth": ["sidecar.json", ...]?,         // read by the mock provider
//     "instruction": {"text", "category", "target"?},
//     "config": { "footage": {...}, "audio": {...}, "allocation": {...},
//                 "editor": {...}, "reviewer": {...}, "eval": {...},
//                 "provider": {"attempts", "backoff", "max_in_flight"} } }

struct ManifestVideo {
  std::string id;
  std::filesystem::path path;
  std::optional<std::filesystem::path> boundaries;
};

struct Manifest {
  std::filesystem::path path;
  std::string name;
  std::uint64_t seed = 0;
  std::vector<ManifestVideo> videos;
  std::string music_id = "music";
  std::filesystem::path music_path;
  std::optional<std::filesystem::path> subtitles;
  std::vector<std::filesystem::path> truth;
  Instruction instruction;
  Json config = Json::object();

  static Manifest load(const std::filesystem::path& path);
};

struct PipelineConfig {
  FootageConfig footage;
  AnalysisConfig audio;
  AllocationConfig allocation;
  EditorConfig editor;
  ReviewerConfig reviewer;
  Seconds harmony_threshold = 0.1;
  int provider_attempts = 3;
  Seconds provider_backoff = 1.0;
  int max_in_flight = 4;
  std::size_t workers = 4;

  Json to_json() const;
  static PipelineConfig from_json(const Json& j);
};

/// Defaults, patched by the manifest config, patched by `overrides`.
PipelineConfig resolve_config(const Json& manifest_config, const Json& overrides);

enum class Stage { deconstruct, parse_audio, plan, edit, render, eval };

std::string_view to_string(Stage s);
Stage parse_stage(const std::string& s);

struct RunOptions {
  std::string provider = "mock";
  std::optional<std::uint64_t> seed;
  bool plan_only = false;
  bool no_render = false;
  /// Defaults to <manifest dir>/artifacts.
  std::filesystem::path out_dir;
  /// Flag-level config patch (highest precedence).
  Json overrides = Json::object();
  /// Replaces the provider built from `provider` (tests).
  std::shared_ptr<Provider> provider_override;
};

struct StageOutcome {
  Stage stage;
  std::string key;
  bool cache_hit = false;
};

struct PipelineResult {
  std::vector<StageOutcome> stages;
  std::size_t provider_sends = 0;
  std::vector<std::string> warnings;
};

class Pipeline {
 public:
  Pipeline(Manifest manifest, RunOptions options);
  ~Pipeline();

  /// Runs one stage; upstream artifacts must already exist and be current.
  StageOutcome run_stage(Stage stage);
  /// deconstruct, parse-audio, plan, edit, render, eval (stops after plan
  /// with plan_only).
  PipelineResult run_all();

  const std::filesystem::path& out_dir() const { return out_dir_; }
  std::filesystem::path artifact_path(Stage stage) const;
  std::filesystem::path timeline_path() const { return out_dir_ / "timeline.json"; }
  std::filesystem::path edl_path() const { return out_dir_ / "edl.json"; }
  std::filesystem::path harmony_path() const { return out_dir_ / "harmony.json"; }
  const PipelineConfig& config() const { return config_; }
  std::size_t provider_sends() const;
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Content+config key the stage's artifact must carry to be current.
  std::string stage_key(Stage stage) const;

 private:
  Provider& provider();
  Json load_current(Stage stage) const;
  void write_artifact(Stage stage, const std::string& key, const Json& data) const;
  MediaRef music_ref() const;
  std::vector<MediaRef> video_refs() const;

  Json run_deconstruct();
  Json run_parse_audio();
  Json run_plan();
  Json run_edit();
  Json run_render();
  Json run_eval();

  Manifest manifest_;
  RunOptions options_;
  PipelineConfig config_;
  std::filesystem::path out_dir_;
  std::shared_ptr<Provider> provider_;
  std::vector<std::string> warnings_;
  mutable std::optional<std::string> inputs_hash_;
};

}  // namespace montage
