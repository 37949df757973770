#include "montage/footage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "montage/hash.hpp"
#include "montage/parallel.hpp"
#include "montage/provider.hpp"

namespace montage {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string strip_period(std::string s) {
  s = trim(std::move(s));
  while (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

// "00:01:02,500" -> 62.5
std::optional<Seconds> parse_srt_time(const std::string& s) {
  int h = 0, m = 0, sec = 0, ms = 0;
  char sep = 0;
  if (std::sscanf(s.c_str(), " %d:%d:%d%c%d", &h, &m, &sec, &sep, &ms) != 5 || (sep != ',' && sep != '.'))
    return std::nullopt;
  return h * 3600.0 + m * 60.0 + sec + ms / 1000.0;
}

std::string keyframe_digest(const Shot& shot) {
  std::string all;
  for (const auto& k : shot.keyframes) all += k.hash;
  return short_hash(all.empty() ? shot.id : all);
}

Json roster_json(const std::vector<CharacterIdentity>& roster) {
  Json r = Json::array();
  for (const auto& id : roster) r.push_back(id);
  return r;
}

}  // namespace

Embedding embed_text(std::string_view text, std::size_t dim) {
  Embedding v(dim, 0.0);
  auto tokens = tokenize(text);
  if (tokens.empty()) tokens.push_back("\x01empty");
  auto add = [&](const std::string& feature) {
    const auto h = fnv1a(feature);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add("u:" + tokens[i]);
    if (i + 1 < tokens.size()) add("b:" + tokens[i] + " " + tokens[i + 1]);
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) {
    // Every feature cancelled out; fall back to the first feature's bucket.
    v[fnv1a("u:" + tokens[0]) % dim] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw PreconditionError("embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::string ShotAttributes::text(Attribute a) const {
  switch (a) {
    case Attribute::cinematography: return scale.empty() ? cinematography : cinematography + " " + scale;
    case Attribute::characters: {
      std::string s;
      for (const auto& c : characters) s += (s.empty() ? "" : ", ") + c.name;
      return s;
    }
    case Attribute::environment: return environment;
    case Attribute::action: return action;
  }
  return {};
}

std::string ShotAttributes::caption() const {
  std::string s;
  for (const auto& part : {strip_period(action), strip_period(environment), strip_period(cinematography)}) {
    if (part.empty()) continue;
    s += s.empty() ? part : ", " + part;
  }
  if (s.empty()) return {};
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

void ShotAttributes::embed() {
  for (std::size_t i = 0; i < kAttributeCount; ++i) embeddings[i] = embed_text(text(static_cast<Attribute>(i)));
}

SimilarityWeights::SimilarityWeights(double c, double ch, double e, double a) : w_{c, ch, e, a} {
  for (double x : w_)
    if (x < 0) throw UserError("similarity weights must be non-negative");
  if (std::abs(c + ch + e + a - 1.0) > 1e-9) throw UserError("similarity weights must sum to 1");
}

double shot_similarity(const ShotAttributes& a, const ShotAttributes& b, const SimilarityWeights& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < kAttributeCount; ++i) {
    if (a.embeddings[i].empty() || b.embeddings[i].empty()) throw PreconditionError("shot attributes are not embedded");
    s += w.values()[i] * 0.5 * (1.0 + cosine(a.embeddings[i], b.embeddings[i]));
  }
  return std::clamp(s, 0.0, 1.0);
}

std::vector<std::vector<std::size_t>> partition_by_similarity(const std::vector<double>& adjacent, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw UserError("scene threshold tau must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> groups{{0}};
  for (std::size_t i = 0; i < adjacent.size(); ++i) {
    if (adjacent[i] < tau) groups.emplace_back();
    groups.back().push_back(i + 1);
  }
  return groups;
}

std::vector<Scene> aggregate_scenes(const std::vector<Shot>& shots, const SimilarityWeights& w, double tau,
                                    std::size_t first_index) {
  if (!(tau > 0.0 && tau < 1.0)) throw UserError("scene threshold tau must lie in (0, 1)");
  std::vector<Scene> scenes;
  std::size_t begin = 0;
  while (begin < shots.size()) {
    std::size_t end = begin + 1;
    while (end < shots.size() && shots[end].source == shots[begin].source) ++end;
    std::vector<double> sims;
    for (std::size_t i = begin; i + 1 < end; ++i)
      sims.push_back(shot_similarity(shots[i].attributes, shots[i + 1].attributes, w));
    for (const auto& group : partition_by_similarity(sims, tau)) {
      Scene z;
      z.id = "Z" + std::to_string(first_index + scenes.size());
      for (auto k : group) z.shots.push_back(shots[begin + k].id);
      scenes.push_back(std::move(z));
    }
    begin = end;
  }
  return scenes;
}

std::string shot_id(const std::string& source, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_s%03zu", index);
  return source + buf;
}

std::vector<Shot> shots_from_boundaries(const MediaRef& source, std::vector<Seconds> boundaries) {
  if (!source.usable()) throw UserError("video " + source.id + " is empty");
  std::sort(boundaries.begin(), boundaries.end());
  std::vector<Seconds> cuts{0.0};
  for (Seconds b : boundaries)
    if (b > cuts.back() && b < source.duration) cuts.push_back(b);
  cuts.push_back(source.duration);
  std::vector<Shot> shots;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    Shot s;
    s.id = shot_id(source.id, i + 1);
    s.source = source.id;
    s.t_in = cuts[i];
    s.t_out = cuts[i + 1];
    shots.push_back(std::move(s));
  }
  return shots;
}

std::vector<Seconds> detect_boundaries(const MediaRef& source, const FrameSource& frames,
                                       const ShotDetectConfig& config) {
  if (!source.usable()) throw UserError("video " + source.id + " is empty");
  const auto sampled = frames.sample(source, 0.0, source.duration, config.fps, config.short_side);
  if (sampled.empty()) throw UserError("video " + source.id + " produced no frames");
  std::vector<Seconds> cuts;
  Seconds last = 0.0;
  HsvHistogram prev = hsv_histogram(sampled.front().image);
  for (std::size_t k = 1; k < sampled.size(); ++k) {
    const auto cur = hsv_histogram(sampled[k].image);
    if (histogram_distance(prev, cur) > config.threshold && sampled[k].t - last >= config.refractory) {
      cuts.push_back(sampled[k].t);
      last = sampled[k].t;
    }
    prev = cur;
  }
  return cuts;
}

std::vector<Shot> detect_shots(const MediaRef& source, const FrameSource& frames, const ShotDetectConfig& config) {
  return shots_from_boundaries(source, detect_boundaries(source, frames, config));
}

std::vector<Seconds> load_boundary_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open boundary sidecar " + path.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw UserError(path.string() + " must be a JSON list of seconds");
  std::vector<Seconds> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw UserError(path.string() + " must be a JSON list of seconds");
    out.push_back(v.get<double>());
  }
  return out;
}

void sample_keyframes(Shot& shot, const MediaRef& source, const FrameSource& frames, double fps, int short_side) {
  shot.keyframes.clear();
  const auto sampled = frames.sample(source, shot.t_in, shot.t_out, fps, short_side);
  for (std::size_t k = 0; k < sampled.size(); ++k) {
    Keyframe kf;
    kf.t = sampled[k].t;
    kf.hash = image_hash(sampled[k].image);
    kf.luma = mean_luma(sampled[k].image);
    kf.change = k == 0 ? 0.0 : frame_difference(sampled[k - 1].image, sampled[k].image);
    shot.keyframes.push_back(std::move(kf));
  }
}

std::vector<SubtitleLine> parse_srt(std::string_view text) {
  std::vector<SubtitleLine> out;
  std::string body(text);
  if (body.rfind("\xEF\xBB\xBF", 0) == 0) body.erase(0, 3);
  std::istringstream in(body);
  std::string line;
  std::optional<SubtitleLine> cur;
  auto flush = [&] {
    if (cur && !cur->text.empty()) out.push_back(*cur);
    cur.reset();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto arrow = line.find("-->");
    if (arrow != std::string::npos) {
      flush();
      auto a = parse_srt_time(line.substr(0, arrow));
      auto b = parse_srt_time(line.substr(arrow + 3));
      if (!a || !b) throw UserError("malformed SRT timing line: " + line);
      cur = SubtitleLine{*a, *b, ""};
      continue;
    }
    if (trim(line).empty()) {
      flush();
      continue;
    }
    if (!cur) continue;  // cue index
    cur->text += (cur->text.empty() ? "" : " ") + trim(line);
  }
  flush();
  return out;
}

std::vector<SubtitleLine> load_srt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open subtitle file " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_srt(text);
}

std::vector<CharacterIdentity> infer_identities(const std::vector<SubtitleLine>& transcript, const Provider& provider) {
  if (transcript.empty()) return {};
  Json lines = Json::array();
  for (const auto& l : transcript) lines.push_back({{"start", l.start}, {"end", l.end}, {"text", l.text}});
  auto res = provider.complete(make_request(Task::identity_inference, {{"transcript", lines}}));
  std::vector<CharacterIdentity> roster;
  for (const auto& j : res.parsed.at("identities")) {
    auto id = j.get<CharacterIdentity>();
    if (id.name.empty()) continue;
    auto dup = std::any_of(roster.begin(), roster.end(), [&](const CharacterIdentity& r) { return r.name == id.name; });
    if (!dup) roster.push_back(std::move(id));
  }
  return roster;
}

ShotAttributes caption_shot(const Shot& shot, const Provider& provider, const std::vector<CharacterIdentity>& roster) {
  Attachment frames;
  frames.kind = AttachmentKind::frames;
  frames.ref = "shot:" + shot.id;
  frames.hash = keyframe_digest(shot);
  for (const auto& k : shot.keyframes)
    if (!k.still.empty()) frames.files.push_back(k.still);
  Json ctx = {{"shot", shot.id},
              {"source", shot.source},
              {"t_in", shot.t_in},
              {"t_out", shot.t_out},
              {"roster", roster_json(roster)}};
  auto res = provider.complete(make_request(Task::shot_caption, ctx, {frames}));
  const auto& p = res.parsed;
  ShotAttributes a;
  a.cinematography = p.at("cinematography").at("text").get<std::string>();
  a.scale = p.at("cinematography").at("scale").get<std::string>();
  for (const auto& c : p.at("characters"))
    a.characters.push_back({c.at("name").get<std::string>(), c.at("salience").get<double>()});
  a.environment = p.at("environment").get<std::string>();
  a.action = p.at("action").get<std::string>();
  a.embed();
  return a;
}

std::string summarize_scene(const Scene& scene, const std::vector<Shot>& shots, const Provider& provider,
                            const std::vector<CharacterIdentity>& roster) {
  Json captions = Json::array();
  for (const auto& id : scene.shots) {
    auto it = std::find_if(shots.begin(), shots.end(), [&](const Shot& s) { return s.id == id; });
    if (it == shots.end()) throw PreconditionError("scene " + scene.id + " references unknown shot " + id);
    captions.push_back(it->attributes.caption());
  }
  Json ctx = {{"scene", scene.id}, {"captions", captions}, {"roster", roster_json(roster)}};
  return provider.complete(make_request(Task::scene_summary, ctx)).parsed.at("summary").get<std::string>();
}

Json FootageConfig::to_json() const {
  const auto& w = weights.values();
  return {{"detect",
           {{"fps", detect.fps},
            {"short_side", detect.short_side},
            {"threshold", detect.threshold},
            {"refractory", detect.refractory}}},
          {"keyframe_fps", keyframe_fps},
          {"keyframe_short_side", keyframe_short_side},
          {"similarity_weights", {w[0], w[1], w[2], w[3]}},
          {"tau", tau}};
}

FootageConfig FootageConfig::from_json(const Json& j) {
  FootageConfig c;
  if (j.contains("detect")) {
    const auto& d = j["detect"];
    c.detect.fps = d.value("fps", c.detect.fps);
    c.detect.short_side = d.value("short_side", c.detect.short_side);
    c.detect.threshold = d.value("threshold", c.detect.threshold);
    c.detect.refractory = d.value("refractory", c.detect.refractory);
  }
  c.keyframe_fps = j.value("keyframe_fps", c.keyframe_fps);
  c.keyframe_short_side = j.value("keyframe_short_side", c.keyframe_short_side);
  if (j.contains("similarity_weights")) {
    const auto& w = j["similarity_weights"];
    if (!w.is_array() || w.size() != kAttributeCount) throw UserError("similarity_weights must list four weights");
    c.weights = SimilarityWeights(w[0].get<double>(), w[1].get<double>(), w[2].get<double>(), w[3].get<double>());
  }
  c.tau = j.value("tau", c.tau);
  if (!(c.tau > 0.0 && c.tau < 1.0)) throw UserError("scene threshold tau must lie in (0, 1)");
  if (c.keyframe_fps <= 0 || c.detect.fps <= 0) throw UserError("sampling rates must be positive");
  return c;
}

const Shot* Deconstruction::find_shot(const std::string& id) const {
  auto it = std::find_if(shots.begin(), shots.end(), [&](const Shot& s) { return s.id == id; });
  return it == shots.end() ? nullptr : &*it;
}

const Scene* Deconstruction::find_scene(const std::string& id) const {
  auto i = scene_index(id);
  return i == std::string::npos ? nullptr : &scenes[i];
}

std::size_t Deconstruction::scene_index(const std::string& id) const {
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].id == id) return i;
  return std::string::npos;
}

Deconstruction deconstruct(const std::vector<VideoInput>& videos, const std::vector<SubtitleLine>& transcript,
                           const Provider& provider, const FootageConfig& config) {
  if (videos.empty()) throw UserError("no footage given");
  Deconstruction d;
  std::vector<std::size_t> owner;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& in = videos[v];
    if (!in.frames && !in.boundaries) throw PreconditionError("video " + in.media.id + " has no frame source");
    auto shots = in.boundaries ? shots_from_boundaries(in.media, load_boundary_sidecar(*in.boundaries))
                               : detect_shots(in.media, *in.frames, config.detect);
    for (auto& s : shots) {
      d.shots.push_back(std::move(s));
      owner.push_back(v);
    }
  }

  parallel_for(d.shots.size(), config.workers, [&](std::size_t i) {
    const auto& in = videos[owner[i]];
    if (!in.frames) return;
    sample_keyframes(d.shots[i], in.media, *in.frames, config.keyframe_fps, config.keyframe_short_side);
    if (config.stills_dir) {
      std::vector<Seconds> times;
      for (const auto& k : d.shots[i].keyframes) times.push_back(k.t);
      auto files = in.frames->export_stills(in.media, times, *config.stills_dir);
      for (std::size_t k = 0; k < files.size() && k < d.shots[i].keyframes.size(); ++k)
        d.shots[i].keyframes[k].still = files[k];
    }
  });

  d.roster = infer_identities(transcript, provider);
  parallel_for(d.shots.size(), config.workers,
               [&](std::size_t i) { d.shots[i].attributes = caption_shot(d.shots[i], provider, d.roster); });

  d.scenes = aggregate_scenes(d.shots, config.weights, config.tau);
  parallel_for(d.scenes.size(), config.workers, [&](std::size_t i) {
    d.scenes[i].summary = summarize_scene(d.scenes[i], d.shots, provider, d.roster);
    d.scenes[i].embedding = embed_text(d.scenes[i].summary);
  });
  return d;
}

void to_json(Json& j, const ShotAttributes& a) {
  Json chars = Json::array();
  for (const auto& c : a.characters) chars.push_back({{"name", c.name}, {"salience", c.salience}});
  j = {{"cinematography", {{"text", a.cinematography}, {"scale", a.scale}}},
       {"characters", chars},
       {"environment", a.environment},
       {"action", a.action}};
}

void from_json(const Json& j, ShotAttributes& a) {
  a.cinematography = j.at("cinematography").value("text", std::string{});
  a.scale = j.at("cinematography").value("scale", std::string{});
  a.characters.clear();
  for (const auto& c : j.value("characters", Json::array()))
    a.characters.push_back({c.at("name").get<std::string>(), c.value("salience", 0.0)});
  a.environment = j.value("environment", std::string{});
  a.action = j.value("action", std::string{});
  a.embed();
}

void to_json(Json& j, const Keyframe& k) {
  j = {{"t", k.t}, {"hash", k.hash}, {"luma", k.luma}, {"change", k.change}};
  if (!k.still.empty()) j["still"] = k.still.string();
}

void from_json(const Json& j, Keyframe& k) {
  k.t = j.at("t").get<double>();
  k.hash = j.value("hash", std::string{});
  k.luma = j.value("luma", 0.0);
  k.change = j.value("change", 0.0);
  k.still = j.value("still", std::string{});
}

void to_json(Json& j, const Shot& s) {
  j = {{"id", s.id},     {"source", s.source},         {"t_in", s.t_in},
       {"t_out", s.t_out}, {"attributes", s.attributes}, {"keyframes", s.keyframes}};
}

void from_json(const Json& j, Shot& s) {
  s.id = j.at("id").get<std::string>();
  s.source = j.at("source").get<std::string>();
  s.t_in = j.at("t_in").get<double>();
  s.t_out = j.at("t_out").get<double>();
  if (j.contains("attributes")) s.attributes = j.at("attributes").get<ShotAttributes>();
  s.keyframes = j.value("keyframes", std::vector<Keyframe>{});
}

void to_json(Json& j, const Scene& s) { j = {{"id", s.id}, {"shots", s.shots}, {"summary", s.summary}}; }

void from_json(const Json& j, Scene& s) {
  s.id = j.at("id").get<std::string>();
  s.shots = j.at("shots").get<std::vector<std::string>>();
  s.summary = j.value("summary", std::string{});
  s.embedding = embed_text(s.summary);
}

void to_json(Json& j, const Deconstruction& d) {
  Json roster = Json::array();
  for (const auto& r : d.roster) roster.push_back(r);
  j = {{"shots", d.shots}, {"scenes", d.scenes}, {"roster", roster}};
}

void from_json(const Json& j, Deconstruction& d) {
  d.shots = j.at("shots").get<std::vector<Shot>>();
  d.scenes = j.at("scenes").get<std::vector<Scene>>();
  d.roster = j.value("roster", std::vector<CharacterIdentity>{});
}

}  // namespace montage
