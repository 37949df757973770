#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "montage/errors.hpp"

namespace montage {

using Json = nlohmann::json;
using Seconds = double;

inline constexpr Seconds kDefaultTolerance = 0.05;

enum class MediaKind { video, audio };

struct MediaRef {
  std::string id;
  std::filesystem::path path;
  Seconds duration = 0.0;
  MediaKind kind = MediaKind::video;

  bool usable() const { return duration > 0.0; }
};

enum class InstructionCategory { character_centric, narrative_centric, unspecified };

struct Instruction {
  std::string text;
  InstructionCategory category = InstructionCategory::unspecified;
  /// Explicit protagonist; when empty, resolved against the roster by name.
  std::optional<std::string> target;
};

struct CharacterIdentity {
  std::string name;
  std::string role;
  std::vector<std::string> aliases;

  bool matches(const std::string& who) const;
  bool operator==(const CharacterIdentity&) const = default;
};

/// Half-open interval [begin, end) on some time axis. Touching intervals do
/// not overlap.
struct Interval {
  Seconds begin = 0.0;
  Seconds end = 0.0;

  Seconds length() const { return end - begin; }
  bool overlaps(const Interval& o) const { return begin < o.end && o.begin < end; }
  bool operator==(const Interval&) const = default;
};

struct Clip {
  std::string source;
  Seconds t_in = 0.0;
  Seconds t_out = 0.0;
  std::string origin_shot;
  std::string spec_id;

  Seconds duration() const { return t_out - t_in; }
  Interval interval() const { return {t_in, t_out}; }
  bool operator==(const Clip&) const = default;
};

struct Timeline {
  std::vector<Clip> clips;
  std::string music;

  bool operator==(const Timeline&) const = default;
};

/// Non-negative weights of the four objective terms (visual, narrative,
/// instruction, sync). Construction rejects negative or all-zero weights.
class ObjectiveWeights {
 public:
  ObjectiveWeights() = default;
  ObjectiveWeights(double vis, double narr, double cond, double sync);

  double vis() const { return vis_; }
  double narr() const { return narr_; }
  double cond() const { return cond_; }
  double sync() const { return sync_; }

 private:
  double vis_ = 1.0, narr_ = 1.0, cond_ = 1.0, sync_ = 1.0;
};

struct ObjectiveTerms {
  double vis = 0.0;
  double narr = 0.0;
  double cond = 0.0;
  double sync = 0.0;
};

Seconds timeline_duration(const Timeline& timeline);

enum class ViolationKind { overlap, duration_mismatch, invalid_clip };

struct TimelineViolation {
  ViolationKind kind;
  /// Clip indices (0-based). For duration_mismatch both are unset.
  std::optional<std::size_t> first;
  std::optional<std::size_t> second;
  std::string detail;
};

struct ValidityReport {
  std::vector<TimelineViolation> violations;

  bool ok() const { return violations.empty(); }
  std::vector<std::pair<std::size_t, std::size_t>> overlap_pairs() const;
  std::string summary() const;
};

/// Reports source reuse, duration mismatch against the music and broken
/// clips. `sources` supplies source durations for the t_out bound; clips
/// whose source is not listed are only checked for 0 <= t_in < t_out.
ValidityReport validate_timeline(const Timeline& timeline, const MediaRef& music,
                                 Seconds tolerance = kDefaultTolerance,
                                 std::span<const MediaRef> sources = {});

/// A timeline that passed validate_timeline with zero violations.
class ValidatedTimeline {
 public:
  /// Throws UserError listing the violations when the timeline is invalid.
  static ValidatedTimeline require(Timeline timeline, const MediaRef& music,
                                   Seconds tolerance = kDefaultTolerance,
                                   std::span<const MediaRef> sources = {});

  const Timeline& timeline() const { return timeline_; }

 private:
  explicit ValidatedTimeline(Timeline t) : timeline_(std::move(t)) {}
  Timeline timeline_;
};

/// Diagnostic joint score; never searched over directly.
double objective_score(const ObjectiveTerms& q, const ObjectiveWeights& w);

/// Committed source intervals, per source id. Intervals are kept disjoint.
class UsedIntervals {
 public:
  /// Returns false (and does nothing) if `iv` intersects a stored interval.
  bool add(const std::string& source, Interval iv);
  bool intersects(const std::string& source, Interval iv) const;
  /// Maximal sub-intervals of `within` not covered by stored intervals.
  std::vector<Interval> free_spans(const std::string& source, Interval within) const;
  std::size_t size() const;

 private:
  std::map<std::string, std::map<Seconds, Seconds>> by_source_;
};

// JSON
std::string to_string(MediaKind k);
std::string to_string(InstructionCategory c);
InstructionCategory parse_instruction_category(const std::string& s);

void to_json(Json& j, const MediaRef& m);
void from_json(const Json& j, MediaRef& m);
void to_json(Json& j, const Clip& c);
void from_json(const Json& j, Clip& c);
void to_json(Json& j, const Timeline& t);
void from_json(const Json& j, Timeline& t);
void to_json(Json& j, const Instruction& i);
void to_json(Json& j, const CharacterIdentity& c);
void from_json(const Json& j, CharacterIdentity& c);
void from_json(const Json& j, Instruction& i);

}  // namespace montage
