#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "montage/audio.hpp"
#include "montage/core.hpp"

namespace montage {

class Provider;

enum class KeypointKind { downbeat = 0, pitch_change = 1, energy_change = 2 };

std::string_view to_string(KeypointKind k);
KeypointKind parse_keypoint_kind(std::string_view s);

/// Cue intensities [downbeat, pitch, energy], each in [0, 1].
using CueVector = std::array<double, 3>;

struct SoundKeypoint {
  Seconds t = 0.0;
  KeypointKind kind = KeypointKind::downbeat;
  double intensity = 0.0;
  /// Intensities of every cue merged into this keypoint; cues[kind] >= intensity.
  CueVector cues{};
  /// Inserted as a gap-filling midpoint rather than detected.
  bool synthetic = false;

  bool operator==(const SoundKeypoint&) const = default;
};

SoundKeypoint make_keypoint(Seconds t, KeypointKind kind, double intensity);

struct MusicUnit {
  std::string id;
  Seconds start = 0.0;
  Seconds end = 0.0;
  std::string label = "other";
  std::string caption;
  /// Selected cut points strictly inside (start, end), sorted.
  std::vector<SoundKeypoint> keypoints;

  Seconds length() const { return end - start; }
};

class KeypointWeights {
 public:
  KeypointWeights() = default;
  KeypointWeights(double db, double pc, double se);

  const CueVector& values() const { return beta_; }

 private:
  CueVector beta_{0.5, 0.25, 0.25};
};

struct AnalysisConfig {
  int sample_rate = 22050;
  int frame_size = 2048;
  int hop = 512;
  /// Beats per bar for downbeat selection.
  int meter = 4;
  double min_bpm = 40.0;
  double max_bpm = 240.0;
  /// Centre of the log-normal tempo prior.
  double prior_bpm = 120.0;
  /// Half-width of the chroma comparison windows.
  Seconds pitch_window = 0.5;
  double pitch_threshold = 0.3;
  /// Energy changes: median-filter length and peak-picking radius, and the
  /// minimum mean per-band rise in dB.
  Seconds energy_window = 0.5;
  double energy_threshold_db = 3.0;
  Seconds filter_window = 0.25;
  Seconds min_gap = 0.5;
  Seconds max_gap = 8.0;
  Seconds snap_radius = 0.5;
  KeypointWeights beta;
  /// Use the novelty segmentation when the provider fails.
  bool structure_fallback = true;

  Seconds hop_seconds() const { return static_cast<double>(hop) / sample_rate; }
  Json to_json() const;
  static AnalysisConfig from_json(const Json& j);
};

/// Frame-level features on the analysis axis (frame i at i * hop / rate).
struct AudioFeatures {
  double frame_rate = 0.0;
  std::size_t frames = 0;
  /// Input resampled to the analysis rate.
  std::vector<float> signal;
  /// Half-wave rectified log-magnitude spectral flux.
  std::vector<double> flux;
  /// Frame RMS of the windowed signal.
  std::vector<double> rms;
  static constexpr std::size_t kBands = 16;
  /// Log-spaced band energies in dB (50 Hz to 10 kHz).
  std::vector<std::array<double, kBands>> bands;
  /// L2-normalized 12-bin chroma (zero for silent frames).
  std::vector<std::array<double, 12>> chroma;
  bool silent = true;

  Seconds time_of(std::size_t frame) const { return static_cast<double>(frame) / frame_rate; }
};

/// Resamples to the analysis rate and computes the STFT features. Throws
/// PreconditionError for rates below 8 kHz or input shorter than 2 s.
AudioFeatures compute_features(const AudioBuffer& audio, const AnalysisConfig& config = {});

struct BeatGrid {
  double bpm = 0.0;
  std::vector<std::size_t> beat_frames;
  std::vector<std::size_t> downbeat_frames;
};

BeatGrid track_beats(const AudioFeatures& f, const AnalysisConfig& config = {});

std::vector<SoundKeypoint> detect_keypoints(const AudioFeatures& f, KeypointKind kind,
                                            const AnalysisConfig& config = {});
std::vector<SoundKeypoint> detect_keypoints(const AudioBuffer& audio, KeypointKind kind,
                                            const AnalysisConfig& config = {});

/// Non-maximum suppression: keypoints closer than `window` collapse onto the
/// strongest (ties: downbeat, then earlier). Survivors absorb the cues of
/// the keypoints they suppress.
std::vector<SoundKeypoint> filter_keypoints(const std::vector<SoundKeypoint>& pool, Seconds window);

double score_keypoint(const CueVector& intensities, const KeypointWeights& beta);

/// Greedy selection of the highest-scoring interior keypoints with spacing
/// >= min_gap (unit ends count as anchors), then gap filling so that no
/// segment exceeds max_gap.
std::vector<SoundKeypoint> select_unit_keypoints(const MusicUnit& unit,
                                                 const std::vector<SoundKeypoint>& keypoints,
                                                 const KeypointWeights& beta, Seconds min_gap,
                                                 Seconds max_gap);

/// Boundaries from checkerboard-kernel novelty on the self-similarity of
/// chroma + energy features (interior times only, sorted).
std::vector<Seconds> novelty_boundaries(const AudioFeatures& f);

/// Partition [0, duration] into labeled units. With a provider, boundaries
/// come from the music_structure task; otherwise (or on provider failure
/// when config.structure_fallback) from novelty_boundaries. Interior
/// boundaries snap to the nearest keypoint within config.snap_radius.
std::vector<MusicUnit> segment_structure(const AudioFeatures& f, Seconds duration,
                                         const std::vector<SoundKeypoint>& keypoints,
                                         const Provider* provider, const AnalysisConfig& config = {},
                                         const std::vector<std::string>& audio_files = {});

struct AudioAnalysis {
  Seconds duration = 0.0;
  double bpm = 0.0;
  Seconds hop_seconds = 0.0;
  std::vector<SoundKeypoint> pool;
  std::vector<SoundKeypoint> keypoints;
  std::vector<MusicUnit> units;

  /// Selected cut points: every unit keypoint plus interior unit boundaries
  /// that coincide with a filtered keypoint.
  std::vector<SoundKeypoint> grid() const;
};

/// Full structural parse: features, three detectors, filtering, structure,
/// per-unit selection and unit captions.
AudioAnalysis analyze_audio(const AudioBuffer& audio, const Provider* provider,
                            const AnalysisConfig& config = {},
                            const std::vector<std::string>& audio_files = {});

void to_json(Json& j, const SoundKeypoint& k);
void from_json(const Json& j, SoundKeypoint& k);
void to_json(Json& j, const MusicUnit& u);
void from_json(const Json& j, MusicUnit& u);
void to_json(Json& j, const AudioAnalysis& a);
void from_json(const Json& j, AudioAnalysis& a);

}  // namespace montage
