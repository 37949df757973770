#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "montage/core.hpp"

namespace montage {

// Ground-truth sidecar shipped with synthetic projects and read by the mock
// provider. Schema (JSON, version 1):
//
//   { "version": 1, "source": "footage", "duration": 160.0, "fps": 2.0,
//     "identities": [ {"name", "role", "aliases"} ],
//     "shots": [ { "id", "source" (optional), "t_in", "t_out", "scene", "quality",
//                  "cinematography": {"text", "scale"},
//                  "characters": [ {"mention", "identity", "salience"} ],
//                  "environment", "action",
//                  "frames": [ {"aes", "present": [names], "luma", "motion"} ] } ],
//     "music": { "sections": [ {"start", "end", "label"} ] } }
//
// Frame k of a shot sits at t_in + k / fps.

struct TruthFrame {
  double aes = 0.5;
  std::vector<std::string> present;
  double luma = 0.5;
  double motion = 0.05;
};

struct TruthCharacter {
  /// Anonymous reference used in caption text, e.g. "a man".
  std::string mention;
  /// Rostered identity behind the mention; may be empty.
  std::string identity;
  double salience = 0.5;
};

struct TruthShot {
  std::string id;
  /// Source media id; defaults to the document's "source".
  std::string source;
  Seconds t_in = 0.0;
  Seconds t_out = 0.0;
  std::string scene;
  double quality = 0.8;
  std::string cinematography;
  std::string scale;
  std::vector<TruthCharacter> characters;
  std::string environment;
  std::string action;
  std::vector<TruthFrame> frames;
};

struct TruthSection {
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string label;
};

struct GroundTruth {
  std::string source;
  Seconds duration = 0.0;
  double fps = 2.0;
  std::vector<CharacterIdentity> identities;
  std::vector<TruthShot> shots;
  std::vector<TruthSection> music_sections;

  const TruthShot* find_shot(const std::string& id) const;
  /// Shot of `source` whose [t_in, t_out) contains t.
  const TruthShot* shot_at(const std::string& source, Seconds t) const;
  /// Index of the keyframe of `shot` at or before t, clamped to range.
  static std::size_t frame_index(const TruthShot& shot, Seconds t, double fps);
};

GroundTruth load_ground_truth(const std::filesystem::path& path);

/// Union of several per-source documents (shots keep their source ids).
GroundTruth merge_ground_truth(const std::vector<GroundTruth>& parts);

void to_json(Json& j, const TruthFrame& f);
void from_json(const Json& j, TruthFrame& f);
void to_json(Json& j, const TruthCharacter& c);
void from_json(const Json& j, TruthCharacter& c);
void to_json(Json& j, const TruthShot& s);
void from_json(const Json& j, TruthShot& s);
void to_json(Json& j, const TruthSection& s);
void from_json(const Json& j, TruthSection& s);
void to_json(Json& j, const GroundTruth& g);
void from_json(const Json& j, GroundTruth& g);

}  // namespace montage
