#pragma once

#include <optional>
#include <string>
#include <vector>

#include "montage/core.hpp"
#include "montage/footage.hpp"
#include "montage/playwriter.hpp"

namespace montage {

class Provider;

enum class Criterion { identity, overlap, duration, quality };
enum class Decision { accept, reject };

std::string_view to_string(Criterion c);

struct ReviewReason {
  Criterion criterion = Criterion::quality;
  std::string detail;
  bool hard = false;
};

struct ReviewVerdict {
  Decision decision = Decision::accept;
  std::vector<ReviewReason> reasons;
  double presence_ratio = 1.0;

  bool accepted() const { return decision == Decision::accept; }
  bool has_hard() const;
};

struct ReviewerConfig {
  double min_ratio = 0.6;
  double min_quality = 0.5;
  Seconds tolerance = kDefaultTolerance;
  std::size_t probe_frames = 3;
  double min_luma = 0.05;
  double max_luma = 0.98;
  /// Consecutive keyframes closer than this count as identical.
  double frozen_change = 1e-3;

  Json to_json() const;
  static ReviewerConfig from_json(const Json& j);
};

/// Keyframes of `shot` whose time lies in [clip.t_in, clip.t_out).
std::vector<Keyframe> clip_keyframes(const Shot& shot, const Clip& clip);

struct IdentityResult {
  double ratio = 1.0;
  bool pass = true;
  std::size_t calls = 0;
};

/// Hierarchical probe: `probe` evenly spaced keyframes first, all keyframes
/// when the probe disagrees. Unspecified target passes with ratio 1.
IdentityResult verify_identity(const Clip& clip, const std::vector<Keyframe>& keyframes,
                               const std::vector<CharacterIdentity>& roster, const std::optional<std::string>& target,
                               const Provider& provider, double min_ratio, std::size_t probe = 3);

/// Hard reasons only: overlap with a committed clip of the same source and
/// |duration - tau| > tolerance.
std::vector<ReviewReason> verify_integrity(const Clip& clip, const Timeline& committed, const ShotSpec& spec,
                                           Seconds tolerance);

struct QualityResult {
  bool pass = true;
  std::optional<ReviewReason> reason;
  bool provider_called = false;
};

/// Luma and frozen-frame heuristics first, then the provider rubric.
QualityResult verify_quality(const Clip& clip, const std::vector<Keyframe>& keyframes, const Provider& provider,
                             const ReviewerConfig& config);

struct ReviewContext {
  const ShotSpec* spec = nullptr;
  const Timeline* committed = nullptr;
  const std::vector<CharacterIdentity>* roster = nullptr;
  std::optional<std::string> target;
  std::vector<Keyframe> keyframes;
};

class Reviewer {
 public:
  virtual ~Reviewer() = default;
  virtual ReviewVerdict review(const Clip& clip, const ReviewContext& context) const = 0;
};

/// Integrity (hard, short-circuits) -> identity -> quality. Provider
/// failures become soft "provider unavailable" reasons.
class StandardReviewer : public Reviewer {
 public:
  StandardReviewer(const Provider& provider, ReviewerConfig config = {}) : provider_(provider), config_(config) {}
  ReviewVerdict review(const Clip& clip, const ReviewContext& context) const override;
  const ReviewerConfig& config() const { return config_; }

 private:
  const Provider& provider_;
  ReviewerConfig config_;
};

void to_json(Json& j, const ReviewReason& r);
void to_json(Json& j, const ReviewVerdict& v);

}  // namespace montage
