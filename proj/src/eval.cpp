#include "montage/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace montage {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<Seconds> offsets_to(const std::vector<Seconds>& cuts, std::vector<Seconds> kps) {
  std::sort(kps.begin(), kps.end());
  std::vector<Seconds> out;
  for (Seconds c : cuts) {
    if (kps.empty()) {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    auto it = std::lower_bound(kps.begin(), kps.end(), c);
    double best = std::numeric_limits<double>::infinity();
    if (it != kps.end()) best = *it - c;
    if (it != kps.begin()) best = std::min(best, c - *std::prev(it));
    out.push_back(best);
  }
  return out;
}

double fraction_within(const std::vector<Seconds>& offsets, Seconds threshold) {
  if (offsets.empty()) return 1.0;
  const auto n = std::count_if(offsets.begin(), offsets.end(), [&](Seconds d) { return d <= threshold; });
  return static_cast<double>(n) / static_cast<double>(offsets.size());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UserError("cannot write " + p.string());
  out << text;
}

}  // namespace

std::vector<Seconds> cut_times(const Timeline& timeline) {
  std::vector<Seconds> cuts;
  Seconds pos = 0.0;
  for (std::size_t i = 0; i + 1 < timeline.clips.size(); ++i) {
    pos += timeline.clips[i].duration();
    cuts.push_back(pos);
  }
  return cuts;
}

HarmonyReport av_harmony(const Timeline& timeline, const std::vector<SoundKeypoint>& keypoints, Seconds threshold) {
  if (timeline.clips.empty()) throw PreconditionError("av_harmony needs a non-empty timeline");
  if (threshold < 0) throw PreconditionError("harmony threshold must be non-negative");
  HarmonyReport r;
  r.threshold = threshold;
  r.cuts = cut_times(timeline);
  std::vector<Seconds> all;
  std::map<std::string, std::vector<Seconds>> per_kind;
  for (const auto& k : keypoints) {
    all.push_back(k.t);
    per_kind[std::string(to_string(k.kind))].push_back(k.t);
  }
  r.offsets = offsets_to(r.cuts, all);
  r.aligned_fraction = keypoints.empty() ? (r.cuts.empty() ? 1.0 : 0.0) : fraction_within(r.offsets, threshold);
  for (auto& [kind, ts] : per_kind) r.by_kind[kind] = fraction_within(offsets_to(r.cuts, ts), threshold);
  return r;
}

std::vector<HarmonyReport> harmony_sweep(const Timeline& timeline, const std::vector<SoundKeypoint>& keypoints,
                                         const std::vector<Seconds>& thresholds) {
  std::vector<HarmonyReport> out;
  for (Seconds t : thresholds) out.push_back(av_harmony(timeline, keypoints, t));
  return out;
}

std::string sweep_csv(const std::vector<HarmonyReport>& sweep) {
  std::vector<std::string> kinds;
  for (const auto& r : sweep)
    for (const auto& [k, _] : r.by_kind)
      if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  std::ostringstream out;
  out << "threshold,cuts,aligned,aligned_fraction";
  for (const auto& k : kinds) out << ',' << k;
  out << '\n';
  char buf[64];
  for (const auto& r : sweep) {
    const auto aligned =
        std::count_if(r.offsets.begin(), r.offsets.end(), [&](Seconds d) { return d <= r.threshold; });
    std::snprintf(buf, sizeof buf, "%.3f,%zu,%td,%.6f", r.threshold, r.cuts.size(), aligned, r.aligned_fraction);
    out << buf;
    for (const auto& k : kinds) {
      auto it = r.by_kind.find(k);
      if (it == r.by_kind.end()) {
        out << ',';
      } else {
        std::snprintf(buf, sizeof buf, ",%.6f", it->second);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

void to_json(Json& j, const HarmonyReport& r) {
  Json offsets = Json::array();
  for (Seconds d : r.offsets) offsets.push_back(std::isfinite(d) ? Json(d) : Json(nullptr));
  j = {{"threshold", r.threshold},
       {"cuts", r.cuts},
       {"offsets", offsets},
       {"aligned_fraction", r.aligned_fraction},
       {"by_kind", r.by_kind}};
}

ClickTrack synthesize_click_track(const ClickTrackParams& p, std::uint64_t seed) {
  if (p.bpm <= 0 || p.length <= 0 || p.sample_rate <= 0 || p.meter <= 0)
    throw PreconditionError("click track parameters must be positive");
  ClickTrack out;
  const double sr = p.sample_rate;
  out.audio.sample_rate = p.sample_rate;
  out.audio.samples.assign(static_cast<std::size_t>(std::llround(p.length * sr)), 0.0f);
  auto& s = out.audio.samples;

  const double beat = 60.0 / p.bpm;
  const double click_len = 0.05;
  for (int k = 0;; ++k) {
    const double t = p.lead_in + k * beat;
    if (t + click_len > p.length) break;
    const bool down = k % p.meter == 0;
    out.beats.push_back(t);
    if (down) out.downbeats.push_back(t);
    const double f = down ? 1500.0 : 1000.0;
    const double amp = down ? 0.8 : 0.4;
    const auto start = static_cast<std::size_t>(std::llround(t * sr));
    for (std::size_t i = 0; i < static_cast<std::size_t>(click_len * sr) && start + i < s.size(); ++i) {
      const double x = static_cast<double>(i);
      s[start + i] += static_cast<float>(amp * std::exp(-x / (0.01 * sr)) * std::sin(2.0 * kPi * f * x / sr));
    }
  }

  static const double kPad[] = {220.0, 330.0, 262.0, 392.0};
  std::vector<Seconds> starts = p.sections;
  if (starts.empty() || starts.front() > 0.0) starts.insert(starts.begin(), 0.0);
  const Seconds noise_from = starts.size() >= 3 ? starts.back() : p.length + 1.0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  std::size_t sec = 0;
  double phase = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    while (sec + 1 < starts.size() && t >= starts[sec + 1]) ++sec;
    phase += 2.0 * kPi * kPad[sec % 4] / sr;
    double v = 0.1 * std::sin(phase);
    if (t >= noise_from) v += 0.05 * noise(rng);
    s[i] += static_cast<float>(v);
  }
  return out;
}

SyntheticProject generate_synthetic_project(std::uint64_t seed, const SyntheticParams& params) {
  if (params.n_scenes == 0 || params.shots_per_scene == 0 || params.bpm <= 0 || params.music_len <= 0)
    throw PreconditionError("synthetic project parameters must be positive");
  static const char* kEnv[] = {"rain-soaked harbor at night", "crowded morning market", "quiet forest cabin",
                               "windy rooftop above the city", "empty train station",  "sunlit desert highway",
                               "flooded subway tunnel",        "snowy mountain pass"};
  static const char* kActions[][2] = {
      {"watches the ships leave", "runs along the pier"},     {"bargains over fruit", "pushes through the crowd"},
      {"lights a lantern", "reads an old letter"},           {"looks over the skyline", "argues in the wind"},
      {"waits on the platform", "boards the last train"},    {"drives with the windows down", "fixes a flat tire"},
      {"wades through dark water", "searches with a torch"}, {"climbs through deep snow", "shelters behind rocks"}};
  static const char* kCine[] = {"slow dolly in", "handheld tracking", "static tripod framing", "aerial drift",
                                "low angle push"};
  static const char* kScale[] = {"wide", "medium", "close-up", "extreme close-up"};

  SyntheticProject p;
  p.seed = seed;
  p.params = params;
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)); };

  auto& g = p.truth;
  g.source = "footage";
  g.fps = 2.0;
  g.identities = {{"Mara", "protagonist", {"the woman"}}, {"Tobias", "companion", {"the man"}}};

  const std::size_t n_shots = params.n_scenes * params.shots_per_scene;
  // Degraded shots exercising each quality gate.
  const std::size_t black = n_shots > 5 ? params.shots_per_scene + 1 : n_shots;
  const std::size_t frozen = n_shots > 12 ? 3 * params.shots_per_scene : n_shots;
  const std::size_t poor = n_shots > 18 ? 4 * params.shots_per_scene + 2 : n_shots;

  Seconds t = 0.0;
  for (std::size_t z = 0; z < params.n_scenes; ++z) {
    const bool mara_leads = z % 5 != 2;
    for (std::size_t k = 0; k < params.shots_per_scene; ++k) {
      const std::size_t i = z * params.shots_per_scene + k;
      TruthShot s;
      s.id = shot_id(g.source, i + 1);
      s.source = g.source;
      s.t_in = t;
      s.t_out = t + 0.5 * static_cast<double>(8 + pick(13));
      t = s.t_out;
      s.scene = "scene" + std::to_string(z + 1);
      s.quality = i == poor ? 0.3 : uniform(0.7, 0.95);
      // One camera style and cast per scene; adjacent scenes differ in both.
      s.cinematography = kCine[z % 5];
      s.scale = kScale[pick(4)];
      if (!mara_leads)
        s.characters = {{"a man", "Tobias", 0.8}, {"a woman", "Mara", 0.3}};
      else if (z % 2 == 0)
        s.characters = {{"a woman", "Mara", 0.8}};
      else
        s.characters = {{"a woman", "Mara", 0.8}, {"a man", "Tobias", 0.4}};
      const bool with_tobias = s.characters.size() > 1;
      s.environment = kEnv[z % 8];
      s.action = std::string(mara_leads ? "a woman " : "a man ") + kActions[z % 8][k % 2];

      const auto frames = static_cast<std::size_t>(std::ceil((s.t_out - s.t_in) * g.fps - 1e-9));
      // Brightness drifts slowly within a shot; per-frame flicker would read as cuts.
      const double base_luma = uniform(0.35, 0.65);
      const double drift = uniform(-0.05, 0.05);
      const double motion = uniform(0.05, 0.3);
      for (std::size_t f = 0; f < frames; ++f) {
        TruthFrame tf;
        tf.aes = uniform(0.3, 0.95);
        if (uniform(0.0, 1.0) < (mara_leads ? 0.85 : 0.3)) tf.present.push_back("Mara");
        if (uniform(0.0, 1.0) < (mara_leads ? 0.4 : 0.9) && with_tobias) tf.present.push_back("Tobias");
        const double ramp = frames > 1 ? static_cast<double>(f) / static_cast<double>(frames - 1) : 0.0;
        tf.luma = i == black ? 0.02 : (i == frozen ? base_luma : std::clamp(base_luma + drift * ramp, 0.1, 0.9));
        tf.motion = i == frozen ? 0.0 : motion;
        s.frames.push_back(std::move(tf));
      }
      if (i > 0) p.boundaries.push_back(s.t_in);
      g.shots.push_back(std::move(s));
    }
  }
  g.duration = t;

  // Music sections start on downbeats roughly every 10 s.
  ClickTrackParams cp;
  cp.bpm = params.bpm;
  cp.length = params.music_len;
  const double bar = cp.meter * 60.0 / cp.bpm;
  const auto n_sections = static_cast<std::size_t>(std::max<long long>(1, std::llround(params.music_len / 10.0)));
  cp.sections = {0.0};
  for (std::size_t i = 1; i < n_sections; ++i) {
    const double target = params.music_len * static_cast<double>(i) / static_cast<double>(n_sections);
    const double b = cp.lead_in + bar * std::round((target - cp.lead_in) / bar);
    if (b > cp.sections.back() + bar && b < params.music_len - bar) cp.sections.push_back(b);
  }
  p.music = synthesize_click_track(cp, seed);
  for (std::size_t i = 0; i < cp.sections.size(); ++i) {
    const Seconds end = i + 1 < cp.sections.size() ? cp.sections[i + 1] : params.music_len;
    std::string label = i % 2 == 0 ? "verse" : "chorus";
    if (cp.sections.size() >= 3 && i == 0) label = "intro";
    if (cp.sections.size() >= 3 && i + 1 == cp.sections.size()) label = "outro";
    g.music_sections.push_back({cp.sections[i], end, label});
  }

  static const char* kLines[] = {"We leave before the tide turns.", "You said that last night.",
                                 "This time the boat is ready.",   "Then I am coming with you.",
                                 "Keep the lantern low.",          "They will see us from the tower."};
  for (std::size_t i = 0; i < 6; ++i) {
    const Seconds start = 2.0 + 4.0 * static_cast<double>(i);
    if (start + 2.5 > g.duration) break;
    p.subtitles.push_back({start, start + 2.5, std::string(i % 2 == 0 ? "Mara: " : "Tobias: ") + kLines[i]});
  }

  p.instruction.text = "A character-driven montage following Mara through a restless night";
  p.instruction.category = InstructionCategory::character_centric;
  return p;
}

std::string format_srt(const std::vector<SubtitleLine>& lines) {
  auto stamp = [](Seconds t) {
    const auto ms = static_cast<long long>(std::llround(t * 1000.0));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld,%03lld", ms / 3600000, ms / 60000 % 60, ms / 1000 % 60,
                  ms % 1000);
    return std::string(buf);
  };
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += std::to_string(i + 1) + "\n" + stamp(lines[i].start) + " --> " + stamp(lines[i].end) + "\n" +
           lines[i].text + "\n\n";
  }
  return out;
}

std::filesystem::path write_synthetic_project(const SyntheticProject& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "footage.json", Json(p.truth).dump(2) + "\n");
  write_text(dir / "footage.boundaries.json", Json(p.boundaries).dump() + "\n");
  write_wav(dir / "music.wav", p.music.audio);
  write_text(dir / "subtitles.srt", format_srt(p.subtitles));
  // Generated captions give adjacent-shot similarity <= 0.70 across scene
  // boundaries and >= 0.82 within a scene, named roster or not.
  Json manifest = {
      {"version", 1},
      {"name", "synthetic-" + std::to_string(p.seed)},
      {"seed", p.seed},
      {"videos", {{{"id", p.truth.source}, {"path", "footage.json"}, {"boundaries", "footage.boundaries.json"}}}},
      {"music", {{"id", "music"}, {"path", "music.wav"}}},
      {"subtitles", "subtitles.srt"},
      {"truth", {"footage.json"}},
      {"instruction", p.instruction},
      {"config", {{"footage", {{"tau", 0.75}}}}}};
  const auto path = dir / "manifest.json";
  write_text(path, manifest.dump(2) + "\n");
  return path;
}

}  // namespace montage
