#include "montage/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace montage {

ObjectiveWeights::ObjectiveWeights(double vis, double narr, double cond, double sync)
    : vis_(vis), narr_(narr), cond_(cond), sync_(sync) {
  if (vis < 0 || narr < 0 || cond < 0 || sync < 0)
    throw PreconditionError("objective weights must be non-negative");
  if (vis + narr + cond + sync <= 0)
    throw PreconditionError("objective weights must not all be zero");
}

Seconds timeline_duration(const Timeline& timeline) {
  Seconds total = 0.0;
  for (const auto& c : timeline.clips) total += c.duration();
  return total;
}

std::vector<std::pair<std::size_t, std::size_t>> ValidityReport::overlap_pairs() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& v : violations)
    if (v.kind == ViolationKind::overlap) out.emplace_back(*v.first, *v.second);
  return out;
}

std::string ValidityReport::summary() const {
  std::ostringstream os;
  for (const auto& v : violations) os << v.detail << '\n';
  return os.str();
}

ValidityReport validate_timeline(const Timeline& timeline, const MediaRef& music,
                                 Seconds tolerance, std::span<const MediaRef> sources) {
  if (timeline.clips.empty()) throw PreconditionError("validate_timeline: empty timeline");
  ValidityReport report;
  const auto& clips = timeline.clips;

  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& c = clips[i];
    bool bad = !(c.t_in >= 0.0 && c.t_in < c.t_out);
    auto src = std::find_if(sources.begin(), sources.end(),
                            [&](const MediaRef& m) { return m.id == c.source; });
    if (src != sources.end() && c.t_out > src->duration) bad = true;
    if (bad) {
      std::ostringstream os;
      os << "clip " << i + 1 << " invalid interval [" << c.t_in << ", " << c.t_out << ") on "
         << c.source;
      report.violations.push_back({ViolationKind::invalid_clip, i, std::nullopt, os.str()});
    }
  }

  // Sweep per source: sort by t_in, keep the clips still open at each start.
  std::vector<std::size_t> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (clips[a].source != clips[b].source) return clips[a].source < clips[b].source;
    return clips[a].t_in < clips[b].t_in;
  });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& cur = clips[order[k]];
    if (k > 0 && clips[order[k - 1]].source != cur.source) active.clear();
    std::erase_if(active, [&](std::size_t a) { return clips[a].t_out <= cur.t_in; });
    for (auto a : active) {
      if (clips[a].interval().overlaps(cur.interval()))
        pairs.emplace_back(std::min(a, order[k]), std::max(a, order[k]));
    }
    active.push_back(order[k]);
  }
  std::sort(pairs.begin(), pairs.end());
  for (auto [a, b] : pairs) {
    std::ostringstream os;
    os << "clips " << a + 1 << " and " << b + 1 << " reuse source material of "
       << clips[a].source;
    report.violations.push_back({ViolationKind::overlap, a, b, os.str()});
  }

  const Seconds total = timeline_duration(timeline);
  if (std::abs(total - music.duration) > tolerance) {
    std::ostringstream os;
    os << "timeline duration " << total << " s differs from music duration " << music.duration
       << " s by more than " << tolerance << " s";
    report.violations.push_back(
        {ViolationKind::duration_mismatch, std::nullopt, std::nullopt, os.str()});
  }
  return report;
}

ValidatedTimeline ValidatedTimeline::require(Timeline timeline, const MediaRef& music,
                                             Seconds tolerance,
                                             std::span<const MediaRef> sources) {
  if (timeline.clips.empty()) throw UserError("refusing an empty timeline");
  auto report = validate_timeline(timeline, music, tolerance, sources);
  if (!report.ok()) throw UserError("timeline failed validation:\n" + report.summary());
  return ValidatedTimeline(std::move(timeline));
}

double objective_score(const ObjectiveTerms& q, const ObjectiveWeights& w) {
  for (double v : {q.vis, q.narr, q.cond, q.sync})
    if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("objective terms must lie in [0,1]");
  return w.vis() * q.vis + w.narr() * q.narr + w.cond() * q.cond + w.sync() * q.sync;
}

bool UsedIntervals::add(const std::string& source, Interval iv) {
  if (intersects(source, iv)) return false;
  by_source_[source].emplace(iv.begin, iv.end);
  return true;
}

bool UsedIntervals::intersects(const std::string& source, Interval iv) const {
  auto s = by_source_.find(source);
  if (s == by_source_.end()) return false;
  const auto& m = s->second;
  auto it = m.lower_bound(iv.begin);
  if (it != m.end() && Interval{it->first, it->second}.overlaps(iv)) return true;
  if (it != m.begin() && Interval{std::prev(it)->first, std::prev(it)->second}.overlaps(iv))
    return true;
  return false;
}

std::vector<Interval> UsedIntervals::free_spans(const std::string& source, Interval within) const {
  std::vector<Interval> out;
  Seconds cursor = within.begin;
  auto s = by_source_.find(source);
  if (s != by_source_.end()) {
    for (const auto& [b, e] : s->second) {
      if (e <= cursor) continue;
      if (b >= within.end) break;
      if (b > cursor) out.push_back({cursor, b});
      cursor = std::max(cursor, e);
    }
  }
  if (cursor < within.end) out.push_back({cursor, within.end});
  return out;
}

std::size_t UsedIntervals::size() const {
  std::size_t n = 0;
  for (const auto& [_, m] : by_source_) n += m.size();
  return n;
}

std::string to_string(MediaKind k) { return k == MediaKind::video ? "video" : "audio"; }

std::string to_string(InstructionCategory c) {
  switch (c) {
    case InstructionCategory::character_centric: return "character_centric";
    case InstructionCategory::narrative_centric: return "narrative_centric";
    case InstructionCategory::unspecified: return "unspecified";
  }
  return "unspecified";
}

InstructionCategory parse_instruction_category(const std::string& s) {
  if (s == "character_centric") return InstructionCategory::character_centric;
  if (s == "narrative_centric") return InstructionCategory::narrative_centric;
  if (s == "unspecified" || s.empty()) return InstructionCategory::unspecified;
  throw UserError("unknown instruction category: " + s);
}

void to_json(Json& j, const MediaRef& m) {
  j = Json{{"id", m.id}, {"path", m.path.string()}, {"duration", m.duration},
           {"kind", to_string(m.kind)}};
}

void from_json(const Json& j, MediaRef& m) {
  m.id = j.at("id").get<std::string>();
  m.path = j.value("path", std::string{});
  m.duration = j.value("duration", 0.0);
  m.kind = j.value("kind", std::string{"video"}) == "audio" ? MediaKind::audio : MediaKind::video;
}

void to_json(Json& j, const Clip& c) {
  j = Json{{"source", c.source}, {"t_in", c.t_in}, {"t_out", c.t_out},
           {"origin_shot", c.origin_shot}, {"spec_id", c.spec_id}};
}

void from_json(const Json& j, Clip& c) {
  c.source = j.at("source").get<std::string>();
  c.t_in = j.at("t_in").get<double>();
  c.t_out = j.at("t_out").get<double>();
  c.origin_shot = j.value("origin_shot", std::string{});
  c.spec_id = j.value("spec_id", std::string{});
}

void to_json(Json& j, const Timeline& t) { j = Json{{"music", t.music}, {"clips", t.clips}}; }

void from_json(const Json& j, Timeline& t) {
  t.music = j.at("music").get<std::string>();
  t.clips = j.at("clips").get<std::vector<Clip>>();
}

bool CharacterIdentity::matches(const std::string& who) const {
  return who == name || std::find(aliases.begin(), aliases.end(), who) != aliases.end();
}

void to_json(Json& j, const CharacterIdentity& c) {
  j = Json{{"name", c.name}, {"role", c.role}, {"aliases", c.aliases}};
}

void from_json(const Json& j, CharacterIdentity& c) {
  c.name = j.at("name").get<std::string>();
  c.role = j.value("role", std::string{});
  c.aliases = j.value("aliases", std::vector<std::string>{});
}

void to_json(Json& j, const Instruction& i) {
  j = Json{{"text", i.text}, {"category", to_string(i.category)}};
  if (i.target) j["target"] = *i.target;
}

void from_json(const Json& j, Instruction& i) {
  i.text = j.at("text").get<std::string>();
  if (i.text.empty()) throw UserError("instruction text must be non-empty");
  i.category = parse_instruction_category(j.value("category", std::string{"unspecified"}));
  if (j.contains("target") && !j["target"].is_null()) i.target = j["target"].get<std::string>();
}

}  // namespace montage
