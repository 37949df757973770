#include "montage/provider_mock.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "montage/hash.hpp"

namespace montage {

// ---- sidecar --------------------------------------------------------------

const TruthShot* GroundTruth::find_shot(const std::string& id) const {
  auto it = std::find_if(shots.begin(), shots.end(), [&](const TruthShot& s) { return s.id == id; });
  return it == shots.end() ? nullptr : &*it;
}

const TruthShot* GroundTruth::shot_at(const std::string& src, Seconds t) const {
  for (const auto& s : shots) {
    if (!src.empty() && !s.source.empty() && s.source != src) continue;
    if (t >= s.t_in && t < s.t_out) return &s;
  }
  return nullptr;
}

std::size_t GroundTruth::frame_index(const TruthShot& shot, Seconds t, double fps) {
  if (shot.frames.empty()) return 0;
  double k = std::floor((t - shot.t_in) * fps + 1e-6);
  k = std::clamp(k, 0.0, static_cast<double>(shot.frames.size() - 1));
  return static_cast<std::size_t>(k);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot open sidecar " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UserError("sidecar is not valid JSON: " + path.string());
  return j.get<GroundTruth>();
}

GroundTruth merge_ground_truth(const std::vector<GroundTruth>& parts) {
  GroundTruth g;
  if (parts.size() == 1) return parts.front();
  for (const auto& p : parts) {
    if (g.fps <= 0 || g.shots.empty()) g.fps = p.fps;
    g.duration = std::max(g.duration, p.duration);
    for (const auto& id : p.identities) {
      bool seen = std::any_of(g.identities.begin(), g.identities.end(),
                              [&](const CharacterIdentity& x) { return x.name == id.name; });
      if (!seen) g.identities.push_back(id);
    }
    g.shots.insert(g.shots.end(), p.shots.begin(), p.shots.end());
    if (g.music_sections.empty()) g.music_sections = p.music_sections;
  }
  return g;
}

void to_json(Json& j, const TruthFrame& f) {
  j = Json{{"aes", f.aes}, {"present", f.present}, {"luma", f.luma}, {"motion", f.motion}};
}
void from_json(const Json& j, TruthFrame& f) {
  f.aes = j.value("aes", 0.5);
  f.present = j.value("present", std::vector<std::string>{});
  f.luma = j.value("luma", 0.5);
  f.motion = j.value("motion", 0.05);
}
void to_json(Json& j, const TruthCharacter& c) {
  j = Json{{"mention", c.mention}, {"identity", c.identity}, {"salience", c.salience}};
}
void from_json(const Json& j, TruthCharacter& c) {
  c.mention = j.value("mention", std::string{});
  c.identity = j.value("identity", std::string{});
  c.salience = j.value("salience", 0.5);
}
void to_json(Json& j, const TruthShot& s) {
  j = Json{{"id", s.id},
           {"source", s.source},
           {"t_in", s.t_in},
           {"t_out", s.t_out},
           {"scene", s.scene},
           {"quality", s.quality},
           {"cinematography", {{"text", s.cinematography}, {"scale", s.scale}}},
           {"characters", s.characters},
           {"environment", s.environment},
           {"action", s.action},
           {"frames", s.frames}};
}
void from_json(const Json& j, TruthShot& s) {
  s.id = j.at("id").get<std::string>();
  s.source = j.value("source", std::string{});
  s.t_in = j.at("t_in").get<double>();
  s.t_out = j.at("t_out").get<double>();
  s.scene = j.value("scene", std::string{});
  s.quality = j.value("quality", 0.8);
  if (j.contains("cinematography")) {
    s.cinematography = j["cinematography"].value("text", std::string{});
    s.scale = j["cinematography"].value("scale", std::string{});
  }
  s.characters = j.value("characters", std::vector<TruthCharacter>{});
  s.environment = j.value("environment", std::string{});
  s.action = j.value("action", std::string{});
  s.frames = j.value("frames", std::vector<TruthFrame>{});
}
void to_json(Json& j, const TruthSection& s) {
  j = Json{{"start", s.start}, {"end", s.end}, {"label", s.label}};
}
void from_json(const Json& j, TruthSection& s) {
  s.start = j.at("start").get<double>();
  s.end = j.at("end").get<double>();
  s.label = j.value("label", std::string{"other"});
}
void to_json(Json& j, const GroundTruth& g) {
  j = Json{{"version", 1},
           {"source", g.source},
           {"duration", g.duration},
           {"fps", g.fps},
           {"identities", g.identities},
           {"shots", g.shots},
           {"music", {{"sections", g.music_sections}}}};
}
void from_json(const Json& j, GroundTruth& g) {
  g.source = j.value("source", std::string{});
  g.duration = j.value("duration", 0.0);
  g.fps = j.value("fps", 2.0);
  g.identities = j.value("identities", std::vector<CharacterIdentity>{});
  g.shots = j.value("shots", std::vector<TruthShot>{});
  for (auto& s : g.shots)
    if (s.source.empty()) s.source = g.source;
  if (j.contains("music")) g.music_sections = j["music"].value("sections", std::vector<TruthSection>{});
}

// ---- mock backend ---------------------------------------------------------

namespace {

std::uint64_t request_hash(const ModelRequest& r) {
  std::string key(to_string(r.task));
  key += '\n';
  key += r.context.dump();
  for (const auto& a : r.attachments) key += '\n' + a.hash;
  return hash64(key);
}

double unit_fraction(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::string hex6(std::uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(6, '0');
  for (int i = 0; i < 6; ++i) s[static_cast<std::size_t>(i)] = kDigits[(h >> (4 * i)) & 0xF];
  return s;
}

std::vector<CharacterIdentity> roster_of(const Json& ctx) {
  if (!ctx.contains("roster")) return {};
  return ctx["roster"].get<std::vector<CharacterIdentity>>();
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  if (from.empty()) return;
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

bool is_target(const std::string& who, const std::string& target,
               const std::vector<CharacterIdentity>& identities) {
  if (who == target) return true;
  for (const auto& id : identities)
    if (id.matches(who) && id.matches(target)) return true;
  return false;
}

}  // namespace

std::string ground_mentions(std::string text, const std::vector<TruthCharacter>& characters,
                            const std::vector<CharacterIdentity>& roster) {
  for (const auto& c : characters) {
    if (c.identity.empty() || c.mention.empty()) continue;
    auto known = std::any_of(roster.begin(), roster.end(),
                             [&](const CharacterIdentity& id) { return id.matches(c.identity); });
    if (!known) continue;
    replace_all(text, c.mention, c.identity);
    std::string capital = c.mention;
    capital[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(capital[0])));
    replace_all(text, capital, c.identity);
  }
  return text;
}

std::string MockBackend::send(const ModelRequest& r) {
  Json out;
  switch (r.task) {
    case Task::shot_caption: out = shot_caption(r); break;
    case Task::scene_summary: out = scene_summary(r); break;
    case Task::identity_inference: out = identity_inference(r); break;
    case Task::music_structure: out = music_structure(r); break;
    case Task::music_caption: out = music_caption(r); break;
    case Task::allocation: out = allocation(r); break;
    case Task::shot_plan: out = shot_plan(r); break;
    case Task::identity_check: out = identity_check(r); break;
    case Task::quality_check: out = quality_check(r); break;
    case Task::trim_feedback: out = trim_feedback(r); break;
  }
  return out.dump();
}

Json MockBackend::shot_caption(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const auto roster = roster_of(ctx);
  const TruthShot* shot = truth_ ? truth_->find_shot(ctx.value("shot", std::string{})) : nullptr;
  if (shot) {
    Json chars = Json::array();
    for (const auto& c : shot->characters) {
      bool known = !c.identity.empty() &&
                   std::any_of(roster.begin(), roster.end(),
                               [&](const CharacterIdentity& id) { return id.matches(c.identity); });
      chars.push_back({{"name", known ? c.identity : c.mention}, {"salience", c.salience}});
    }
    return {{"cinematography",
             {{"text", ground_mentions(shot->cinematography, shot->characters, roster)},
              {"scale", shot->scale}}},
            {"characters", chars},
            {"environment", ground_mentions(shot->environment, shot->characters, roster)},
            {"action", ground_mentions(shot->action, shot->characters, roster)}};
  }
  static const char* kScales[] = {"wide", "medium", "close-up", "extreme close-up"};
  auto h = request_hash(r);
  return {{"cinematography", {{"text", "steady framing " + hex6(h)}, {"scale", kScales[h % 4]}}},
          {"characters", Json::array()},
          {"environment", "location " + hex6(h >> 24)},
          {"action", "movement " + hex6(h >> 40)}};
}

Json MockBackend::scene_summary(const ModelRequest& r) const {
  std::string summary;
  for (const auto& c : r.context.value("captions", std::vector<std::string>{})) {
    if (!summary.empty()) summary += ' ';
    summary += c;
  }
  if (summary.empty()) summary = "scene " + hex6(request_hash(r));
  return {{"summary", summary}};
}

Json MockBackend::identity_inference(const ModelRequest& r) const {
  Json ids = Json::array();
  if (truth_ && !truth_->identities.empty()) {
    for (const auto& id : truth_->identities) ids.push_back(id);
    return {{"identities", ids}};
  }
  // Speaker-prefixed lines ("NAME: text").
  std::vector<std::string> names;
  for (const auto& line : r.context.value("transcript", Json::array())) {
    auto text = line.value("text", std::string{});
    auto colon = text.find(':');
    if (colon == std::string::npos || colon == 0 || colon > 32) continue;
    auto name = text.substr(0, colon);
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  }
  for (const auto& n : names)
    ids.push_back({{"name", n}, {"role", "speaker"}, {"aliases", Json::array()}});
  return {{"identities", ids}};
}

Json MockBackend::music_structure(const ModelRequest& r) const {
  Json sections = Json::array();
  if (truth_ && !truth_->music_sections.empty()) {
    for (const auto& s : truth_->music_sections) sections.push_back(s);
    return {{"sections", sections}};
  }
  const double duration = r.context.value("duration", 0.0);
  std::vector<double> bounds{0.0};
  for (double b : r.context.value("suggested", std::vector<double>{}))
    if (b > bounds.back() && b < duration) bounds.push_back(b);
  bounds.push_back(duration);
  const std::size_t n = bounds.size() - 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::string label = i % 2 == 0 ? "verse" : "chorus";
    if (n >= 3 && i == 0) label = "intro";
    if (n >= 3 && i + 1 == n) label = "outro";
    sections.push_back({{"start", bounds[i]}, {"end", bounds[i + 1]}, {"label", label}});
  }
  return {{"sections", sections}};
}

Json MockBackend::music_caption(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const double energy = ctx.value("energy", 0.5);
  const double density = ctx.value("keypoint_density", 1.0);
  const char* level = energy > 0.66 ? "high" : energy > 0.33 ? "medium" : "low";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s section, %.0f BPM, %s energy, %s rhythm, %s mood",
                ctx.value("label", std::string{"other"}).c_str(), ctx.value("tempo_bpm", 0.0), level,
                density > 1.5 ? "dense" : "sparse", energy > 0.5 ? "driving" : "reflective");
  return {{"caption", buf}};
}

Json MockBackend::allocation(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const auto& units = ctx.at("units");
  const auto& scenes = ctx.at("scenes");
  const std::size_t m = units.size();
  const std::size_t n = scenes.size();
  double total = 0.0;
  for (const auto& u : units) total += u.at("end").get<double>() - u.at("start").get<double>();

  // Contiguous chunks proportional to unit length, at least one scene each.
  std::vector<std::size_t> cut(m + 1, 0);
  double acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    acc += units[j].at("end").get<double>() - units[j].at("start").get<double>();
    auto c = static_cast<std::size_t>(std::llround(total > 0 ? n * acc / total : 0.0));
    c = std::max(c, cut[j] + 1);
    c = std::min(c, n - (m - 1 - j));
    cut[j + 1] = c;
  }
  cut[m] = n;

  Json assignments = Json::array();
  std::string story = "Storyline for \"" + ctx.at("instruction").value("text", std::string{}) + "\":";
  for (std::size_t j = 0; j < m; ++j) {
    Json ids = Json::array();
    for (std::size_t k = cut[j]; k < cut[j + 1]; ++k) ids.push_back(scenes[k].at("id"));
    assignments.push_back({{"unit", units[j].at("id")}, {"scenes", ids}});
    story += " " + units[j].at("id").get<std::string>() + " shows " + ids.dump() + ";";
  }
  return {{"assignments", assignments}, {"storyline", story}};
}

Json MockBackend::shot_plan(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const auto& slots = ctx.at("slots");
  const auto& assigned = ctx.at("assigned");
  Json shots = Json::array();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto& scene = assigned[i % assigned.size()];
    auto summary = scene.value("summary", std::string{});
    auto first = summary.substr(0, summary.find('.'));
    shots.push_back({{"slot", slots[i].at("slot")},
                     {"scene", scene.at("id")},
                     {"description", first.empty() ? "shot of " + scene.at("id").get<std::string>() : first}});
  }
  return {{"shots", shots}};
}

Json MockBackend::identity_check(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const auto target = ctx.value("target", std::string{});
  const double t = ctx.value("time", 0.0);
  if (truth_) {
    if (const auto* shot = truth_->shot_at(ctx.value("source", std::string{}), t)) {
      bool present = false;
      if (!shot->frames.empty()) {
        const auto& f = shot->frames[GroundTruth::frame_index(*shot, t, truth_->fps)];
        present = std::any_of(f.present.begin(), f.present.end(), [&](const std::string& who) {
          return is_target(who, target, truth_->identities);
        });
      }
      return {{"present", present}, {"salient", present}};
    }
  }
  bool present = unit_fraction(request_hash(r)) < 0.5;
  return {{"present", present}, {"salient", present}};
}

Json MockBackend::quality_check(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const double t_in = ctx.value("t_in", 0.0);
  const double t_out = ctx.value("t_out", 0.0);
  if (truth_) {
    double q = 2.0;
    const auto src = ctx.value("source", std::string{});
    for (const auto& s : truth_->shots)
      if (Interval{s.t_in, s.t_out}.overlaps({t_in, t_out}) &&
          (s.source.empty() || src.empty() || src == s.source))
        q = std::min(q, s.quality);
    if (q <= 1.0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "sidecar quality %.3f", q);
      return {{"score", q}, {"rubric", buf}};
    }
  }
  double q = 0.5 + 0.5 * unit_fraction(request_hash(r));
  return {{"score", q}, {"rubric", "templated quality"}};
}

Json MockBackend::trim_feedback(const ModelRequest& r) const {
  const auto& ctx = r.context;
  const auto target = ctx.value("target", std::string{});
  const double fps = ctx.value("fps", 2.0);
  const auto count = ctx.value("frame_count", std::size_t{0});
  const double t_in = ctx.value("t_in", 0.0);
  Json frames = Json::array();
  const TruthShot* shot = truth_ ? truth_->find_shot(ctx.value("shot", std::string{})) : nullptr;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t_in + static_cast<double>(k) / fps;
    if (shot && !shot->frames.empty()) {
      const auto& f = shot->frames[GroundTruth::frame_index(*shot, t, truth_->fps)];
      bool present = !target.empty() &&
                     std::any_of(f.present.begin(), f.present.end(), [&](const std::string& who) {
                       return is_target(who, target, truth_->identities);
                     });
      frames.push_back({{"aes", f.aes}, {"present", present}});
    } else {
      auto h = hash64(std::to_string(request_hash(r)) + ":" + std::to_string(k));
      frames.push_back({{"aes", 0.4 + 0.5 * unit_fraction(h)}, {"present", (h & 1) == 1}});
    }
  }
  return {{"frames", frames}};
}

}  // namespace montage
