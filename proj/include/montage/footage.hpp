#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "montage/core.hpp"
#include "montage/frames.hpp"

namespace montage {

class Provider;

enum class Attribute { cinematography = 0, characters = 1, environment = 2, action = 3 };
inline constexpr std::size_t kAttributeCount = 4;

using Embedding = std::vector<double>;
inline constexpr std::size_t kEmbeddingDim = 256;

/// Signed feature hashing of lower-cased word unigrams and bigrams,
/// L2-normalized. Empty text hashes a fixed sentinel token.
Embedding embed_text(std::string_view text, std::size_t dim = kEmbeddingDim);

/// Throws PreconditionError on dimension mismatch; 0 when either is zero.
double cosine(const Embedding& a, const Embedding& b);

struct CharacterMention {
  std::string name;
  double salience = 0.0;
  bool operator==(const CharacterMention&) const = default;
};

struct ShotAttributes {
  std::string cinematography;
  std::string scale;
  std::vector<CharacterMention> characters;
  std::string environment;
  std::string action;
  std::array<Embedding, kAttributeCount> embeddings;

  std::string text(Attribute a) const;
  /// One-sentence caption used for scene summaries.
  std::string caption() const;
  /// Recomputes every attribute embedding.
  void embed();
};

struct Keyframe {
  Seconds t = 0.0;
  std::string hash;
  double luma = 0.0;
  /// Mean absolute luma difference to the previous keyframe of the shot.
  double change = 0.0;
  /// JPEG still for network providers, when exported.
  std::filesystem::path still;
};

struct Shot {
  std::string id;
  std::string source;
  Seconds t_in = 0.0;
  Seconds t_out = 0.0;
  ShotAttributes attributes;
  std::vector<Keyframe> keyframes;

  Seconds duration() const { return t_out - t_in; }
  Interval interval() const { return {t_in, t_out}; }
};

struct Scene {
  std::string id;
  std::vector<std::string> shots;
  std::string summary;
  Embedding embedding;
};

class SimilarityWeights {
 public:
  SimilarityWeights() = default;
  /// Non-negative weights summing to 1 (within 1e-9).
  SimilarityWeights(double cinematography, double characters, double environment, double action);
  const std::array<double, kAttributeCount>& values() const { return w_; }

 private:
  std::array<double, kAttributeCount> w_{0.25, 0.25, 0.25, 0.25};
};

/// Weighted mean of (1 + cos) / 2 over the four attribute embeddings.
double shot_similarity(const ShotAttributes& a, const ShotAttributes& b, const SimilarityWeights& w);

/// Groups of consecutive indices: a new group starts after adjacent[i] < tau.
std::vector<std::vector<std::size_t>> partition_by_similarity(const std::vector<double>& adjacent, double tau);

/// Scene partition of shots in source order. Scenes never span two sources.
/// Ids are Z<first_index>, Z<first_index + 1>, ...
std::vector<Scene> aggregate_scenes(const std::vector<Shot>& shots, const SimilarityWeights& w, double tau,
                                    std::size_t first_index = 1);

struct ShotDetectConfig {
  double fps = 10.0;
  int short_side = 90;
  double threshold = 0.4;
  Seconds refractory = 0.3;
};

std::string shot_id(const std::string& source, std::size_t index);

/// Tiles [0, source.duration] at the given cut times (0 and out-of-range
/// values are ignored).
std::vector<Shot> shots_from_boundaries(const MediaRef& source, std::vector<Seconds> boundaries);

std::vector<Seconds> detect_boundaries(const MediaRef& source, const FrameSource& frames,
                                       const ShotDetectConfig& config = {});
std::vector<Shot> detect_shots(const MediaRef& source, const FrameSource& frames, const ShotDetectConfig& config = {});

/// JSON list of cut times in seconds.
std::vector<Seconds> load_boundary_sidecar(const std::filesystem::path& path);

/// Fills shot.keyframes at `fps` with pixel hashes and luma statistics.
void sample_keyframes(Shot& shot, const MediaRef& source, const FrameSource& frames, double fps = 2.0,
                      int short_side = 360);

struct SubtitleLine {
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string text;
};

std::vector<SubtitleLine> parse_srt(std::string_view text);
std::vector<SubtitleLine> load_srt(const std::filesystem::path& path);

/// Empty transcript gives an empty roster without a provider call. Names
/// are de-duplicated keeping the first occurrence.
std::vector<CharacterIdentity> infer_identities(const std::vector<SubtitleLine>& transcript, const Provider& provider);

ShotAttributes caption_shot(const Shot& shot, const Provider& provider, const std::vector<CharacterIdentity>& roster);

std::string summarize_scene(const Scene& scene, const std::vector<Shot>& shots, const Provider& provider,
                            const std::vector<CharacterIdentity>& roster);

struct FootageConfig {
  ShotDetectConfig detect;
  double keyframe_fps = 2.0;
  int keyframe_short_side = 360;
  SimilarityWeights weights;
  double tau = 0.5;
  /// Worker threads for caption and summary calls.
  std::size_t workers = 4;
  /// When set, keyframe stills are exported here for network providers.
  std::optional<std::filesystem::path> stills_dir;

  Json to_json() const;
  static FootageConfig from_json(const Json& j);
};

struct VideoInput {
  MediaRef media;
  std::optional<std::filesystem::path> boundaries;
  std::shared_ptr<const FrameSource> frames;
};

struct Deconstruction {
  std::vector<Shot> shots;
  std::vector<Scene> scenes;
  std::vector<CharacterIdentity> roster;

  const Shot* find_shot(const std::string& id) const;
  const Scene* find_scene(const std::string& id) const;
  /// Index of the scene in `scenes`, or npos.
  std::size_t scene_index(const std::string& id) const;
};

/// Shots -> keyframes -> roster -> captions -> scenes -> summaries.
Deconstruction deconstruct(const std::vector<VideoInput>& videos, const std::vector<SubtitleLine>& transcript,
                           const Provider& provider, const FootageConfig& config = {});

void to_json(Json& j, const ShotAttributes& a);
void from_json(const Json& j, ShotAttributes& a);
void to_json(Json& j, const Keyframe& k);
void from_json(const Json& j, Keyframe& k);
void to_json(Json& j, const Shot& s);
void from_json(const Json& j, Shot& s);
void to_json(Json& j, const Scene& s);
void from_json(const Json& j, Scene& s);
void to_json(Json& j, const Deconstruction& d);
void from_json(const Json& j, Deconstruction& d);

}  // namespace montage
