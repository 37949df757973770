#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "montage/core.hpp"
#include "montage/footage.hpp"
#include "montage/playwriter.hpp"
#include "montage/reviewer.hpp"

namespace montage {

class Provider;

struct CandidatePool {
  std::string spec;
  std::vector<std::string> shots;
  int expansion_level = 0;
};

/// Level k adds the k nearest preceding and following scenes (scene list
/// order). Shots shorter than tau or without a free span >= tau are dropped.
CandidatePool retrieve_candidates(const ShotSpec& spec, const Deconstruction& footage, const UsedIntervals& used,
                                  int level);

/// Per-keyframe scores of one shot; prot is 1 where the target is present.
struct FrameScore {
  double aes = 0.0;
  double prot = 0.0;
};

struct TrimScore {
  double s_aes = 0.0;
  double r_prot = 0.0;
  double combined = 0.0;
};

struct EditorWeights {
  double alpha = 0.6;  // aesthetic
  double beta = 0.4;   // protagonist
};

EditorWeights default_editor_weights(InstructionCategory category);

struct Window {
  Clip clip;
  TrimScore score;
  std::size_t start_frame = 0;
};

/// Every feasible window of length tau starting on the keyframe grid, best
/// first (ties: earliest). Windows intersecting `used` are skipped.
std::vector<Window> rank_windows(const Shot& shot, const ShotSpec& spec, const std::vector<FrameScore>& frames,
                                 const EditorWeights& w, const UsedIntervals& used, double fps = 2.0);

/// Argmax of rank_windows; nullopt when no window is feasible.
std::optional<Window> trim_shot(const Shot& shot, const ShotSpec& spec, const std::vector<FrameScore>& frames,
                                const EditorWeights& w, const UsedIntervals& used, double fps = 2.0);

/// Explicit target, else the first roster name (or alias) mentioned in the
/// instruction text of a character-centric instruction.
std::optional<std::string> resolve_target(const Instruction& instruction,
                                          const std::vector<CharacterIdentity>& roster);

/// Frame scores from provider trim_feedback. Without a target prot is 1.
std::vector<FrameScore> score_frames(const Shot& shot, const std::optional<std::string>& target,
                                     const Provider& provider, double fps = 2.0);

struct EditorConfig {
  std::optional<EditorWeights> weights;
  int max_expansion = 2;
  int max_backtracks = 6;
  Seconds tolerance = kDefaultTolerance;
  double keyframe_fps = 2.0;
  std::size_t workers = 4;

  Json to_json() const;
  static EditorConfig from_json(const Json& j);
};

struct EditResult {
  Timeline timeline;
  Json trace = Json::array();
  std::vector<std::string> warnings;
};

/// Resolves specs sequentially in slot order. Throws UnrecoverableSpecError
/// when a spec has no committable candidate.
EditResult edit_loop(const std::vector<ShotSpec>& plan, const Deconstruction& footage, const Reviewer& reviewer,
                     const Provider& provider, const Instruction& instruction, const std::string& music_id,
                     const EditorConfig& config = {});

}  // namespace montage
