#include "montage/audio_parse.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <mutex>
#include <numeric>

#include "montage/hash.hpp"
#include "montage/provider.hpp"

namespace montage {
namespace {

constexpr double kSilentRms = 1e-4;
constexpr double kPi = 3.14159265358979323846;

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

std::size_t kind_index(KeypointKind k) { return static_cast<std::size_t>(k); }

std::string default_label(std::size_t i, std::size_t n) {
  if (n >= 3 && i == 0) return "intro";
  if (n >= 3 && i + 1 == n) return "outro";
  return i % 2 == 0 ? "verse" : "chorus";
}

double norm(const std::array<double, 12>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Snap a time to the analysis axis.
Seconds on_axis(double sample, int hop, int rate) {
  return std::round(sample / hop) * hop / rate;
}

// Onset of the attack nearest `frame`: the first fine-resolution block whose
// energy rises halfway from the local floor to the local peak.
double refine_onset_sample(const std::vector<float>& x, std::size_t frame, int hop) {
  constexpr int kBlock = 64;
  const long centre = static_cast<long>(frame) * hop;
  const long radius = 3L * hop;
  const long lo = std::max(0L, centre - radius);
  const long hi = std::min(static_cast<long>(x.size()), centre + radius);
  if (hi - lo < 2 * kBlock) return static_cast<double>(centre);
  std::vector<double> e;
  for (long s = lo; s + kBlock <= hi; s += kBlock / 2) {
    double acc = 0.0;
    for (long k = s; k < s + kBlock; ++k) acc += static_cast<double>(x[k]) * x[k];
    e.push_back(acc);
  }
  const auto peak_it = std::max_element(e.begin(), e.end());
  const double floor = *std::min_element(e.begin(), peak_it + 1);
  const double half = floor + 0.5 * (*peak_it - floor);
  if (*peak_it <= 0.0) return static_cast<double>(centre);
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e[i] >= half) return static_cast<double>(lo + static_cast<long>(i) * (kBlock / 2) + kBlock / 2);
  return static_cast<double>(centre);
}

// Frames of local maxima: strictly greater than everything in [i - w, i) and
// not smaller than anything in (i, i + w]. Plateaus resolve to their start.
bool is_local_max(const std::vector<double>& v, std::size_t i, std::size_t w) {
  const std::size_t lo = i >= w ? i - w : 0;
  const std::size_t hi = std::min(v.size() - 1, i + w);
  for (std::size_t j = lo; j < i; ++j)
    if (v[j] >= v[i]) return false;
  for (std::size_t j = i + 1; j <= hi; ++j)
    if (v[j] > v[i]) return false;
  return true;
}

double env_at(const std::vector<double>& env, double pos) {
  if (pos < 0) return 0.0;
  const auto a = static_cast<std::size_t>(std::floor(pos));
  const auto b = static_cast<std::size_t>(std::ceil(pos));
  if (a >= env.size()) return 0.0;
  return std::max(env[a], b < env.size() ? env[b] : 0.0);
}

// Priority order for suppression: higher intensity, then downbeat, then earlier.
bool outranks(const SoundKeypoint& a, const SoundKeypoint& b) {
  if (a.intensity != b.intensity) return a.intensity > b.intensity;
  const bool adb = a.kind == KeypointKind::downbeat, bdb = b.kind == KeypointKind::downbeat;
  if (adb != bdb) return adb;
  if (a.t != b.t) return a.t < b.t;
  return kind_index(a.kind) < kind_index(b.kind);
}

std::vector<SoundKeypoint> normalize_intensity(std::vector<SoundKeypoint> ks) {
  double top = 0.0;
  for (const auto& k : ks) top = std::max(top, k.intensity);
  if (top <= 0.0) return ks;
  for (auto& k : ks) {
    k.intensity /= top;
    k.cues = {};
    k.cues[kind_index(k.kind)] = k.intensity;
  }
  return ks;
}

std::vector<SoundKeypoint> detect_downbeats(const AudioFeatures& f, const AnalysisConfig& c) {
  const auto grid = track_beats(f, c);
  if (grid.downbeat_frames.empty()) return {};
  double top_flux = *std::max_element(f.flux.begin(), f.flux.end());
  double top_rms = *std::max_element(f.rms.begin(), f.rms.end());
  std::vector<SoundKeypoint> out;
  for (auto fr : grid.downbeat_frames) {
    double accent = 0.0;
    for (std::size_t j = fr >= 2 ? fr - 2 : 0; j <= std::min(f.frames - 1, fr + 2); ++j)
      accent = std::max(accent, f.flux[j] / top_flux + f.rms[j] / top_rms);
    const double s = refine_onset_sample(f.signal, fr, c.hop);
    out.push_back(make_keypoint(on_axis(s, c.hop, c.sample_rate), KeypointKind::downbeat, accent));
  }
  return normalize_intensity(std::move(out));
}

std::vector<SoundKeypoint> detect_pitch_changes(const AudioFeatures& f, const AnalysisConfig& c) {
  const auto w = static_cast<std::size_t>(std::max(1.0, std::round(c.pitch_window * f.frame_rate)));
  if (f.frames < 2 * w + 1) return {};
  std::vector<double> nov(f.frames, 0.0);
  for (std::size_t i = w; i + w <= f.frames; ++i) {
    std::array<double, 12> a{}, b{};
    for (std::size_t j = i - w; j < i; ++j)
      for (int p = 0; p < 12; ++p) a[p] += f.chroma[j][p];
    for (std::size_t j = i; j < i + w; ++j)
      for (int p = 0; p < 12; ++p) b[p] += f.chroma[j][p];
    const double na = norm(a), nb = norm(b);
    if (na <= 0.0 || nb <= 0.0) continue;
    double dot = 0.0;
    for (int p = 0; p < 12; ++p) dot += a[p] * b[p];
    nov[i] = 1.0 - dot / (na * nb);
  }
  std::vector<SoundKeypoint> out;
  for (std::size_t i = w; i + w <= f.frames; ++i)
    if (nov[i] >= c.pitch_threshold && is_local_max(nov, i, w))
      out.push_back(make_keypoint(f.time_of(i), KeypointKind::pitch_change, nov[i]));
  return normalize_intensity(std::move(out));
}

std::vector<SoundKeypoint> detect_energy_changes(const AudioFeatures& f, const AnalysisConfig& c) {
  constexpr std::size_t kLag = 2;
  const std::size_t nb = AudioFeatures::kBands;
  if (f.frames < 2 * kLag + 2) return {};
  double top_db = -1e300;
  for (const auto& b : f.bands)
    for (double v : b) top_db = std::max(top_db, v);
  const double floor_db = top_db - 80.0;

  // Median filtering along time removes transients shorter than half the
  // window and keeps step edges in place.
  const auto half = static_cast<std::size_t>(std::max(1.0, std::round(0.5 * c.energy_window * f.frame_rate)));
  std::vector<std::array<double, AudioFeatures::kBands>> smooth(f.frames);
  std::vector<double> buf;
  for (std::size_t i = 0; i < f.frames; ++i) {
    const std::size_t lo = i >= half ? i - half : 0, hi = std::min(f.frames - 1, i + half);
    for (std::size_t b = 0; b < nb; ++b) {
      buf.clear();
      for (std::size_t j = lo; j <= hi; ++j) buf.push_back(std::max(f.bands[j][b], floor_db));
      auto mid = buf.begin() + static_cast<long>(buf.size() / 2);
      std::nth_element(buf.begin(), mid, buf.end());
      smooth[i][b] = *mid;
    }
  }
  std::vector<double> nov(f.frames, 0.0);
  for (std::size_t i = kLag; i + kLag < f.frames; ++i) {
    double rise = 0.0;
    for (std::size_t b = 0; b < nb; ++b) rise += std::max(0.0, smooth[i + kLag][b] - smooth[i - kLag][b]);
    nov[i] = rise / static_cast<double>(nb);
  }
  const auto w = static_cast<std::size_t>(std::max(1.0, std::round(c.energy_window * f.frame_rate)));
  std::vector<SoundKeypoint> out;
  for (std::size_t i = kLag; i + kLag < f.frames; ++i)
    if (nov[i] >= c.energy_threshold_db && is_local_max(nov, i, w)) {
      // Locate the steepest single-frame step inside the detected ramp.
      std::size_t at = i;
      double steepest = -1.0;
      for (std::size_t j = std::max<std::size_t>(1, i - kLag); j <= std::min(f.frames - 1, i + kLag); ++j) {
        double step = 0.0;
        for (std::size_t b = 0; b < nb; ++b) step += std::max(0.0, smooth[j][b] - smooth[j - 1][b]);
        if (step > steepest) {
          steepest = step;
          at = j;
        }
      }
      out.push_back(make_keypoint(f.time_of(at), KeypointKind::energy_change, nov[i]));
    }
  return normalize_intensity(std::move(out));
}

}  // namespace

std::string_view to_string(KeypointKind k) {
  switch (k) {
    case KeypointKind::downbeat: return "downbeat";
    case KeypointKind::pitch_change: return "pitch_change";
    case KeypointKind::energy_change: return "energy_change";
  }
  return "downbeat";
}

KeypointKind parse_keypoint_kind(std::string_view s) {
  if (s == "downbeat") return KeypointKind::downbeat;
  if (s == "pitch_change") return KeypointKind::pitch_change;
  if (s == "energy_change") return KeypointKind::energy_change;
  throw UserError("unknown keypoint kind '" + std::string(s) + "'");
}

SoundKeypoint make_keypoint(Seconds t, KeypointKind kind, double intensity) {
  SoundKeypoint k;
  k.t = t;
  k.kind = kind;
  k.intensity = intensity;
  k.cues[kind_index(kind)] = intensity;
  return k;
}

KeypointWeights::KeypointWeights(double db, double pc, double se) : beta_{db, pc, se} {
  if (db < 0 || pc < 0 || se < 0) throw UserError("keypoint weights must be non-negative");
  if (db + pc + se <= 0) throw UserError("keypoint weights must not all be zero");
}

Json AnalysisConfig::to_json() const {
  return {{"sample_rate", sample_rate},   {"frame_size", frame_size},
          {"hop", hop},                   {"meter", meter},
          {"min_bpm", min_bpm},           {"max_bpm", max_bpm},
          {"prior_bpm", prior_bpm},       {"pitch_window", pitch_window},
          {"pitch_threshold", pitch_threshold},
          {"energy_window", energy_window},
          {"energy_threshold_db", energy_threshold_db}, {"filter_window", filter_window},
          {"min_gap", min_gap},           {"max_gap", max_gap},
          {"snap_radius", snap_radius},
          {"beta", {beta.values()[0], beta.values()[1], beta.values()[2]}},
          {"structure_fallback", structure_fallback}};
}

AnalysisConfig AnalysisConfig::from_json(const Json& j) {
  AnalysisConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.frame_size = j.value("frame_size", c.frame_size);
  c.hop = j.value("hop", c.hop);
  c.meter = j.value("meter", c.meter);
  c.min_bpm = j.value("min_bpm", c.min_bpm);
  c.max_bpm = j.value("max_bpm", c.max_bpm);
  c.prior_bpm = j.value("prior_bpm", c.prior_bpm);
  c.pitch_window = j.value("pitch_window", c.pitch_window);
  c.pitch_threshold = j.value("pitch_threshold", c.pitch_threshold);
  c.energy_window = j.value("energy_window", c.energy_window);
  c.energy_threshold_db = j.value("energy_threshold_db", c.energy_threshold_db);
  c.filter_window = j.value("filter_window", c.filter_window);
  c.min_gap = j.value("min_gap", c.min_gap);
  c.max_gap = j.value("max_gap", c.max_gap);
  c.snap_radius = j.value("snap_radius", c.snap_radius);
  if (j.contains("beta")) {
    const auto& b = j.at("beta");
    if (!b.is_array() || b.size() != 3) throw UserError("beta must be a list of three weights");
    c.beta = KeypointWeights(b[0].get<double>(), b[1].get<double>(), b[2].get<double>());
  }
  c.structure_fallback = j.value("structure_fallback", c.structure_fallback);
  if (c.hop <= 0 || c.frame_size < c.hop || c.sample_rate < 8000 || c.meter < 1)
    throw UserError("invalid audio analysis parameters");
  if (c.min_gap < 0 || c.max_gap <= c.min_gap) throw UserError("need 0 <= min_gap < max_gap");
  return c;
}

AudioFeatures compute_features(const AudioBuffer& audio, const AnalysisConfig& c) {
  if (audio.sample_rate < 8000)
    throw PreconditionError("audio sample rate " + std::to_string(audio.sample_rate) + " Hz is below 8 kHz");
  if (audio.duration() < 2.0) throw PreconditionError("audio is shorter than 2 s");

  AudioFeatures f;
  f.signal = resample(audio, c.sample_rate).samples;
  f.frame_rate = static_cast<double>(c.sample_rate) / c.hop;
  const std::size_t n = f.signal.size();
  const auto frame = static_cast<std::size_t>(c.frame_size);
  const std::size_t bins = frame / 2 + 1;
  f.frames = 1 + n / static_cast<std::size_t>(c.hop);

  std::vector<double> window(frame);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < frame; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(frame));
    wsum2 += window[i] * window[i];
  }

  // Log-spaced band of every bin (-1 outside 50 Hz .. 10 kHz).
  std::vector<int> band_of(bins, -1);
  for (std::size_t k = 1; k < bins; ++k) {
    const double hz = static_cast<double>(k) * c.sample_rate / static_cast<double>(frame);
    if (hz < 50.0 || hz >= 10000.0) continue;
    const double pos = std::log(hz / 50.0) / std::log(10000.0 / 50.0);
    band_of[k] = std::min(static_cast<int>(AudioFeatures::kBands) - 1,
                          static_cast<int>(pos * static_cast<double>(AudioFeatures::kBands)));
  }

  // Pitch-class of every bin in the chroma band (-1 outside it).
  std::vector<int> pitch_class(bins, -1);
  for (std::size_t k = 1; k < bins; ++k) {
    const double hz = static_cast<double>(k) * c.sample_rate / static_cast<double>(frame);
    if (hz < 55.0 || hz > 4000.0) continue;
    const long midi = std::lround(12.0 * std::log2(hz / 440.0) + 69.0);
    pitch_class[k] = static_cast<int>(((midi % 12) + 12) % 12);
  }

  double* in = fftw_alloc_real(frame);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(frame), in, out, FFTW_ESTIMATE);
  }

  f.flux.assign(f.frames, 0.0);
  f.rms.assign(f.frames, 0.0);
  f.chroma.assign(f.frames, {});
  f.bands.assign(f.frames, {});
  std::vector<double> prev(bins, 0.0), cur(bins, 0.0);
  for (std::size_t i = 0; i < f.frames; ++i) {
    const long start = static_cast<long>(i) * c.hop - static_cast<long>(frame / 2);
    double energy = 0.0;
    for (std::size_t j = 0; j < frame; ++j) {
      const long s = start + static_cast<long>(j);
      const double v = (s >= 0 && s < static_cast<long>(n)) ? f.signal[static_cast<std::size_t>(s)] : 0.0;
      in[j] = v * window[j];
      energy += in[j] * in[j];
    }
    f.rms[i] = std::sqrt(energy / wsum2);
    fftw_execute_dft_r2c(plan, in, out);
    double flux = 0.0;
    auto& chroma = f.chroma[i];
    std::array<double, AudioFeatures::kBands> band{};
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag2 = out[k][0] * out[k][0] + out[k][1] * out[k][1];
      cur[k] = std::log1p(10.0 * std::sqrt(mag2));
      flux += std::max(0.0, cur[k] - prev[k]);
      if (pitch_class[k] >= 0) chroma[static_cast<std::size_t>(pitch_class[k])] += mag2;
      if (band_of[k] >= 0) band[static_cast<std::size_t>(band_of[k])] += mag2;
    }
    for (std::size_t b = 0; b < AudioFeatures::kBands; ++b) f.bands[i][b] = 10.0 * std::log10(band[b] + 1e-12);
    f.flux[i] = flux;
    std::swap(prev, cur);
    const double cn = norm(chroma);
    if (f.rms[i] < kSilentRms || cn <= 0.0)
      chroma = {};
    else
      for (auto& x : chroma) x /= cn;
    if (f.rms[i] >= kSilentRms) f.silent = false;
  }

  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return f;
}

BeatGrid track_beats(const AudioFeatures& f, const AnalysisConfig& c) {
  BeatGrid g;
  if (f.silent || f.frames < 8) return g;
  const std::vector<double>& env = f.flux;
  const double mean = std::accumulate(env.begin(), env.end(), 0.0) / static_cast<double>(env.size());
  if (*std::max_element(env.begin(), env.end()) <= 1e-9) return g;

  // Tempo: autocorrelation of the centred envelope under a log-tempo prior.
  const auto lag_lo = static_cast<std::size_t>(std::max(2.0, std::floor(60.0 * f.frame_rate / c.max_bpm)));
  const auto lag_hi = std::min(f.frames / 2, static_cast<std::size_t>(std::ceil(60.0 * f.frame_rate / c.min_bpm)));
  if (lag_hi <= lag_lo + 1) return g;
  std::vector<double> acf(lag_hi + 2, 0.0);
  for (std::size_t l = lag_lo - 1; l <= lag_hi + 1 && l < f.frames; ++l) {
    double s = 0.0;
    for (std::size_t i = 0; i + l < f.frames; ++i) s += (env[i] - mean) * (env[i + l] - mean);
    acf[l] = s / static_cast<double>(f.frames - l);
  }
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t l = lag_lo; l <= lag_hi; ++l) {
    const double bpm = 60.0 * f.frame_rate / static_cast<double>(l);
    const double octaves = std::log2(bpm / c.prior_bpm);
    const double score = acf[l] * std::exp(-0.5 * octaves * octaves);
    if (score > best_score) {
      best_score = score;
      best = l;
    }
  }
  if (acf[best] <= 0.0) return g;
  double period = static_cast<double>(best);
  {
    const double a = acf[best - 1], b = acf[best], cc = acf[best + 1];
    const double den = a - 2 * b + cc;
    if (den < 0) period += std::clamp(0.5 * (a - cc) / den, -0.5, 0.5);
  }

  // Joint refinement of period and phase by comb alignment.
  double best_p = period, best_phi = 0.0, best_fit = -1.0;
  for (double p = period - 1.0; p <= period + 1.0 + 1e-9; p += 0.02) {
    if (p < 2.0) continue;
    for (double phi = 0.0; phi < p; phi += 0.25) {
      double s = 0.0;
      std::size_t count = 0;
      for (double pos = phi; pos < static_cast<double>(f.frames); pos += p, ++count) s += env_at(env, pos);
      if (count == 0) continue;
      const double fit = s / static_cast<double>(count);
      if (fit > best_fit + 1e-12) {
        best_fit = fit;
        best_p = p;
        best_phi = phi;
      }
    }
  }
  g.bpm = 60.0 * f.frame_rate / best_p;

  // Beats snap to the strongest envelope frame near each comb tooth.
  const auto radius = static_cast<std::size_t>(std::max(1.0, std::round(0.15 * best_p)));
  for (double pos = best_phi; pos < static_cast<double>(f.frames); pos += best_p) {
    const auto centre = static_cast<std::size_t>(std::lround(pos));
    if (centre >= f.frames) break;
    std::size_t arg = centre;
    for (std::size_t j = centre >= radius ? centre - radius : 0; j <= std::min(f.frames - 1, centre + radius); ++j)
      if (env[j] > env[arg]) arg = j;
    if (!g.beat_frames.empty() && arg <= g.beat_frames.back()) continue;
    g.beat_frames.push_back(arg);
  }
  if (g.beat_frames.size() < 2) return g;

  // Bar phase: the beat position with the strongest mean accent.
  const double top_flux = *std::max_element(env.begin(), env.end());
  const double top_rms = std::max(1e-12, *std::max_element(f.rms.begin(), f.rms.end()));
  const auto meter = static_cast<std::size_t>(std::max(1, c.meter));
  std::vector<double> votes(meter, 0.0);
  std::vector<std::size_t> counts(meter, 0);
  for (std::size_t k = 0; k < g.beat_frames.size(); ++k) {
    const auto fr = g.beat_frames[k];
    votes[k % meter] += env[fr] / top_flux + f.rms[fr] / top_rms;
    ++counts[k % meter];
  }
  std::size_t phase = 0;
  double phase_score = -1.0;
  for (std::size_t r = 0; r < meter; ++r) {
    if (counts[r] == 0) continue;
    const double v = votes[r] / static_cast<double>(counts[r]);
    if (v > phase_score + 1e-12) {
      phase_score = v;
      phase = r;
    }
  }
  for (std::size_t k = phase; k < g.beat_frames.size(); k += meter) g.downbeat_frames.push_back(g.beat_frames[k]);
  return g;
}

std::vector<SoundKeypoint> detect_keypoints(const AudioFeatures& f, KeypointKind kind, const AnalysisConfig& c) {
  if (f.silent) return {};
  switch (kind) {
    case KeypointKind::downbeat: return detect_downbeats(f, c);
    case KeypointKind::pitch_change: return detect_pitch_changes(f, c);
    case KeypointKind::energy_change: return detect_energy_changes(f, c);
  }
  return {};
}

std::vector<SoundKeypoint> detect_keypoints(const AudioBuffer& audio, KeypointKind kind, const AnalysisConfig& c) {
  return detect_keypoints(compute_features(audio, c), kind, c);
}

std::vector<SoundKeypoint> filter_keypoints(const std::vector<SoundKeypoint>& pool, Seconds window) {
  if (!(window > 0.0)) throw PreconditionError("keypoint filter window must be positive");
  std::vector<SoundKeypoint> order = pool;
  std::sort(order.begin(), order.end(), outranks);
  // Accepted keypoints keyed by time; spacing >= window means at most one
  // neighbour on each side can be closer than `window`.
  std::map<Seconds, std::size_t> by_time;
  std::vector<SoundKeypoint> kept;
  for (const auto& k : order) {
    std::optional<std::size_t> owner;
    auto it = by_time.lower_bound(k.t);
    if (it != by_time.end() && it->first - k.t < window) owner = it->second;
    if (it != by_time.begin()) {
      auto prev = std::prev(it);
      if (k.t - prev->first < window && (!owner || prev->second < *owner)) owner = prev->second;
    }
    if (owner) {
      auto& o = kept[*owner];
      for (std::size_t i = 0; i < 3; ++i) o.cues[i] = std::max(o.cues[i], k.cues[i]);
      continue;
    }
    by_time.emplace(k.t, kept.size());
    kept.push_back(k);
  }
  std::sort(kept.begin(), kept.end(), [](const SoundKeypoint& a, const SoundKeypoint& b) { return a.t < b.t; });
  return kept;
}

double score_keypoint(const CueVector& intensities, const KeypointWeights& beta) {
  const auto& b = beta.values();
  return b[0] * intensities[0] + b[1] * intensities[1] + b[2] * intensities[2];
}

std::vector<SoundKeypoint> select_unit_keypoints(const MusicUnit& unit, const std::vector<SoundKeypoint>& keypoints,
                                                 const KeypointWeights& beta, Seconds min_gap, Seconds max_gap) {
  if (unit.end <= unit.start) throw PreconditionError("music unit " + unit.id + " has non-positive length");
  if (!(min_gap < max_gap)) throw PreconditionError("min_gap must be below max_gap");
  std::vector<SoundKeypoint> cand;
  for (const auto& k : keypoints)
    if (k.t - unit.start >= min_gap && unit.end - k.t >= min_gap) cand.push_back(k);
  std::stable_sort(cand.begin(), cand.end(), [&](const SoundKeypoint& a, const SoundKeypoint& b) {
    const double sa = score_keypoint(a.cues, beta), sb = score_keypoint(b.cues, beta);
    if (sa != sb) return sa > sb;
    return a.t < b.t;
  });
  std::vector<SoundKeypoint> chosen;
  for (const auto& k : cand) {
    const bool clear = std::all_of(chosen.begin(), chosen.end(),
                                   [&](const SoundKeypoint& s) { return std::abs(s.t - k.t) >= min_gap; });
    if (clear) chosen.push_back(k);
  }
  std::sort(chosen.begin(), chosen.end(), [](const SoundKeypoint& a, const SoundKeypoint& b) { return a.t < b.t; });

  // Split segments longer than max_gap.
  for (;;) {
    Seconds prev = unit.start;
    std::size_t at = 0;
    bool split = false;
    for (std::size_t i = 0; i <= chosen.size(); ++i) {
      const Seconds next = i < chosen.size() ? chosen[i].t : unit.end;
      if (next - prev > max_gap) {
        const SoundKeypoint* pick = nullptr;
        for (const auto& k : cand) {
          if (k.t > prev && k.t < next && k.t - prev >= min_gap && next - k.t >= min_gap) {
            pick = &k;  // cand is in score order
            break;
          }
        }
        SoundKeypoint fill;
        if (pick) {
          fill = *pick;
        } else {
          fill.t = 0.5 * (prev + next);
          fill.synthetic = true;
        }
        at = i;
        chosen.insert(chosen.begin() + static_cast<long>(at), fill);
        split = true;
        break;
      }
      prev = next;
    }
    if (!split) break;
  }
  return chosen;
}

std::vector<Seconds> novelty_boundaries(const AudioFeatures& f) {
  const auto block = static_cast<std::size_t>(std::max(1.0, std::round(0.25 * f.frame_rate)));
  const std::size_t nb = f.frames / block;
  const std::size_t half = std::min<std::size_t>(16, nb / 4);
  if (half < 2) return {};

  std::vector<std::array<double, 13>> v(nb);
  std::vector<double> loud(nb, 0.0);
  for (std::size_t b = 0; b < nb; ++b) {
    std::array<double, 12> ch{};
    double e = 0.0;
    for (std::size_t i = b * block; i < (b + 1) * block; ++i) {
      for (int p = 0; p < 12; ++p) ch[p] += f.chroma[i][p];
      e += f.rms[i];
    }
    const double cn = norm(ch);
    for (int p = 0; p < 12; ++p) v[b][p] = cn > 0 ? ch[p] / cn : 0.0;
    loud[b] = std::log(e / static_cast<double>(block) + 1e-6);
  }
  const double lm = std::accumulate(loud.begin(), loud.end(), 0.0) / static_cast<double>(nb);
  double lvar = 0.0;
  for (double x : loud) lvar += (x - lm) * (x - lm);
  const double lsd = std::sqrt(lvar / static_cast<double>(nb));
  for (std::size_t b = 0; b < nb; ++b) v[b][12] = lsd > 1e-9 ? 0.5 * (loud[b] - lm) / lsd : 0.0;

  auto sim = [&](std::size_t a, std::size_t b) {
    double dot = 0.0, na = 0.0, nbb = 0.0;
    for (int k = 0; k < 13; ++k) {
      dot += v[a][k] * v[b][k];
      na += v[a][k] * v[a][k];
      nbb += v[b][k] * v[b][k];
    }
    return na > 0 && nbb > 0 ? dot / std::sqrt(na * nbb) : 0.0;
  };

  const long h = static_cast<long>(half);
  const double sigma = 0.5 * static_cast<double>(half);
  std::vector<double> nov(nb, 0.0);
  for (std::size_t i = half; i + half <= nb; ++i) {
    double acc = 0.0, wsum = 0.0;
    for (long a = -h; a < h; ++a) {
      for (long b = -h; b < h; ++b) {
        const double da = static_cast<double>(a) + 0.5, db = static_cast<double>(b) + 0.5;
        const double g = std::exp(-(da * da + db * db) / (2.0 * sigma * sigma));
        const double sign = ((a < 0) == (b < 0)) ? 1.0 : -1.0;
        acc += sign * g * sim(i + a, i + b);
        wsum += g;
      }
    }
    nov[i] = acc / wsum;
  }
  const double top = *std::max_element(nov.begin(), nov.end());
  std::vector<Seconds> out;
  for (std::size_t i = half; i + half <= nb; ++i)
    if (nov[i] >= 0.1 && nov[i] >= 0.3 * top && is_local_max(nov, i, half))
      out.push_back(static_cast<double>(i * block) / f.frame_rate);
  return out;
}

std::vector<MusicUnit> segment_structure(const AudioFeatures& f, Seconds duration,
                                         const std::vector<SoundKeypoint>& keypoints, const Provider* provider,
                                         const AnalysisConfig& c, const std::vector<std::string>& audio_files) {
  if (duration <= 0.0) throw PreconditionError("music duration must be positive");
  const auto suggested = novelty_boundaries(f);

  struct Section {
    Seconds start;
    std::string label;
  };
  std::vector<Section> sections;
  bool from_provider = false;
  if (provider) {
    try {
      std::vector<Attachment> att;
      if (!audio_files.empty()) {
        Attachment a;
        a.kind = AttachmentKind::audio_segment;
        a.ref = "music";
        for (const auto& p : audio_files) {
          a.files.emplace_back(p);
          a.hash += sha256_file(p);
        }
        a.hash = short_hash(a.hash);
        att.push_back(std::move(a));
      }
      Json ctx = {{"duration", duration}, {"suggested", suggested}};
      auto res = provider->complete(make_request(Task::music_structure, ctx, std::move(att)));
      for (const auto& s : res.parsed.at("sections")) {
        const double st = s.at("start").get<double>();
        if (st < duration) sections.push_back({st, s.at("label").get<std::string>()});
      }
      std::stable_sort(sections.begin(), sections.end(),
                       [](const Section& a, const Section& b) { return a.start < b.start; });
      from_provider = true;
    } catch (const ProviderError&) {
      if (!c.structure_fallback) throw;
      sections.clear();
    }
  }
  if (!from_provider) {
    std::vector<Seconds> b{0.0};
    for (double s : suggested) b.push_back(s);
    for (std::size_t i = 0; i < b.size(); ++i) sections.push_back({b[i], default_label(i, b.size())});
  }

  // Interior boundaries, snapped to the nearest keypoint within the radius.
  std::vector<Section> bounds;
  for (const auto& s : sections) {
    Seconds t = s.start;
    const SoundKeypoint* near = nullptr;
    for (const auto& k : keypoints) {
      const double d = std::abs(k.t - t);
      if (d <= c.snap_radius && (!near || d < std::abs(near->t - t))) near = &k;
    }
    if (near) t = near->t;
    if (t <= 0.0 || t >= duration) continue;
    const Seconds prev = bounds.empty() ? 0.0 : bounds.back().start;
    if (t - prev < c.min_gap || duration - t < c.min_gap) continue;
    bounds.push_back({t, s.label});
  }

  const std::string first_label = sections.empty() ? "verse" : sections.front().label;
  std::vector<MusicUnit> units;
  Seconds start = 0.0;
  std::string label = first_label;
  for (std::size_t i = 0; i <= bounds.size(); ++i) {
    MusicUnit u;
    u.id = "U" + std::to_string(i + 1);
    u.start = start;
    u.end = i < bounds.size() ? bounds[i].start : duration;
    u.label = label;
    units.push_back(std::move(u));
    if (i < bounds.size()) {
      start = bounds[i].start;
      label = bounds[i].label;
    }
  }
  return units;
}

std::vector<SoundKeypoint> AudioAnalysis::grid() const {
  std::vector<SoundKeypoint> g;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (i > 0) {
      for (const auto& k : keypoints)
        if (k.t == units[i].start) g.push_back(k);
    }
    for (const auto& k : units[i].keypoints) g.push_back(k);
  }
  std::sort(g.begin(), g.end(), [](const SoundKeypoint& a, const SoundKeypoint& b) { return a.t < b.t; });
  return g;
}

AudioAnalysis analyze_audio(const AudioBuffer& audio, const Provider* provider, const AnalysisConfig& c,
                            const std::vector<std::string>& audio_files) {
  AudioAnalysis a;
  a.duration = audio.duration();
  a.hop_seconds = c.hop_seconds();
  const auto f = compute_features(audio, c);

  auto beats = std::async(std::launch::async, [&] { return track_beats(f, c); });
  std::array<std::future<std::vector<SoundKeypoint>>, 3> jobs;
  for (std::size_t k = 0; k < 3; ++k)
    jobs[k] = std::async(std::launch::async, [&, k] { return detect_keypoints(f, static_cast<KeypointKind>(k), c); });
  for (auto& j : jobs) {
    auto ks = j.get();
    a.pool.insert(a.pool.end(), ks.begin(), ks.end());
  }
  a.bpm = beats.get().bpm;
  std::sort(a.pool.begin(), a.pool.end(), [](const SoundKeypoint& x, const SoundKeypoint& y) {
    if (x.t != y.t) return x.t < y.t;
    return kind_index(x.kind) < kind_index(y.kind);
  });
  a.keypoints = filter_keypoints(a.pool, c.filter_window);
  a.units = segment_structure(f, a.duration, a.keypoints, provider, c, audio_files);

  double top_energy = 0.0;
  std::vector<double> energy(a.units.size(), 0.0);
  for (std::size_t i = 0; i < a.units.size(); ++i) {
    auto& u = a.units[i];
    u.keypoints = select_unit_keypoints(u, a.keypoints, c.beta, c.min_gap, c.max_gap);
    const auto lo = static_cast<std::size_t>(u.start * f.frame_rate);
    const auto hi = std::min(f.frames, static_cast<std::size_t>(u.end * f.frame_rate));
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += f.rms[j];
    energy[i] = hi > lo ? s / static_cast<double>(hi - lo) : 0.0;
    top_energy = std::max(top_energy, energy[i]);
  }

  std::vector<std::future<std::string>> captions;
  for (std::size_t i = 0; i < a.units.size(); ++i) {
    const auto& u = a.units[i];
    std::size_t inside = 0;
    for (const auto& k : a.keypoints) inside += (k.t >= u.start && k.t < u.end) ? 1 : 0;
    const double e = top_energy > 0 ? std::round(1000.0 * energy[i] / top_energy) / 1000.0 : 0.0;
    const double density = std::round(1000.0 * static_cast<double>(inside) / u.length()) / 1000.0;
    Json ctx = {{"unit", u.id},
                {"label", u.label},
                {"start", u.start},
                {"end", u.end},
                {"tempo_bpm", std::round(a.bpm * 10.0) / 10.0},
                {"energy", e},
                {"keypoint_density", density}};
    if (provider) {
      captions.push_back(std::async(std::launch::async, [provider, ctx] {
        return provider->complete(make_request(Task::music_caption, ctx)).parsed.at("caption").get<std::string>();
      }));
    } else {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s section, %.0f BPM, energy %.2f", u.label.c_str(), a.bpm, e);
      std::promise<std::string> p;
      p.set_value(buf);
      captions.push_back(p.get_future());
    }
  }
  for (std::size_t i = 0; i < a.units.size(); ++i) a.units[i].caption = captions[i].get();
  return a;
}

void to_json(Json& j, const SoundKeypoint& k) {
  j = {{"t", k.t},
       {"kind", to_string(k.kind)},
       {"intensity", k.intensity},
       {"cues", {k.cues[0], k.cues[1], k.cues[2]}}};
  if (k.synthetic) j["synthetic"] = true;
}

void from_json(const Json& j, SoundKeypoint& k) {
  k.t = j.at("t").get<double>();
  k.kind = parse_keypoint_kind(j.at("kind").get<std::string>());
  k.intensity = j.at("intensity").get<double>();
  k.cues = {};
  if (j.contains("cues"))
    for (std::size_t i = 0; i < 3; ++i) k.cues[i] = j.at("cues").at(i).get<double>();
  else
    k.cues[kind_index(k.kind)] = k.intensity;
  k.synthetic = j.value("synthetic", false);
}

void to_json(Json& j, const MusicUnit& u) {
  j = {{"id", u.id},       {"start", u.start}, {"end", u.end},
       {"label", u.label}, {"caption", u.caption}, {"keypoints", u.keypoints}};
}

void from_json(const Json& j, MusicUnit& u) {
  u.id = j.at("id").get<std::string>();
  u.start = j.at("start").get<double>();
  u.end = j.at("end").get<double>();
  u.label = j.value("label", std::string{"other"});
  u.caption = j.value("caption", std::string{});
  u.keypoints = j.value("keypoints", std::vector<SoundKeypoint>{});
}

void to_json(Json& j, const AudioAnalysis& a) {
  j = {{"duration", a.duration}, {"bpm", a.bpm},           {"hop_seconds", a.hop_seconds},
       {"pool", a.pool},         {"keypoints", a.keypoints}, {"units", a.units}};
}

void from_json(const Json& j, AudioAnalysis& a) {
  a.duration = j.at("duration").get<double>();
  a.bpm = j.value("bpm", 0.0);
  a.hop_seconds = j.value("hop_seconds", 0.0);
  a.pool = j.value("pool", std::vector<SoundKeypoint>{});
  a.keypoints = j.at("keypoints").get<std::vector<SoundKeypoint>>();
  a.units = j.at("units").get<std::vector<MusicUnit>>();
}

}  // namespace montage
