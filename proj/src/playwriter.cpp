#include "montage/playwriter.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "montage/parallel.hpp"
#include "montage/provider.hpp"

namespace montage {
namespace {

Json instruction_json(const Instruction& ins) { return ins; }

AllocationProposal parse_proposal(const Json& parsed, const std::vector<MusicUnit>& units,
                                  const std::vector<Scene>& scenes) {
  std::set<std::string> known;
  for (const auto& z : scenes) known.insert(z.id);
  std::map<std::string, std::vector<std::string>> by_unit;
  for (const auto& a : parsed.at("assignments")) {
    auto& list = by_unit[a.at("unit").get<std::string>()];
    for (const auto& z : a.at("scenes")) {
      auto id = z.get<std::string>();
      if (known.count(id) && std::find(list.begin(), list.end(), id) == list.end()) list.push_back(id);
    }
  }
  AllocationProposal p;
  p.storyline = parsed.at("storyline").get<std::string>();
  for (const auto& u : units) p.assignments.push_back({u.id, by_unit[u.id]});
  return p;
}

std::string first_sentence(const std::string& s) {
  auto end = s.find('.');
  return end == std::string::npos ? s : s.substr(0, end);
}

}  // namespace

const std::vector<std::string>* AllocationProposal::scenes_for(const std::string& unit) const {
  for (const auto& a : assignments)
    if (a.unit == unit) return &a.scenes;
  return nullptr;
}

std::vector<AllocationViolation> validate_allocation(const AllocationProposal& p) {
  std::vector<AllocationViolation> out;
  const auto& as = p.assignments;
  for (std::size_t i = 0; i < as.size(); ++i) {
    for (std::size_t j = i + 1; j < as.size(); ++j) {
      for (const auto& z : as[i].scenes) {
        if (std::find(as[j].scenes.begin(), as[j].scenes.end(), z) != as[j].scenes.end())
          out.push_back({AllocationViolationKind::shared_scene, z, as[i].unit, as[j].unit});
      }
    }
  }
  for (const auto& a : as)
    if (a.scenes.empty()) out.push_back({AllocationViolationKind::empty_unit, "", a.unit, ""});
  return out;
}

AllocationProposal repair_allocation(AllocationProposal p) {
  std::set<std::string> seen;
  for (auto& a : p.assignments) {
    std::vector<std::string> kept;
    for (auto& z : a.scenes)
      if (seen.insert(z).second) kept.push_back(std::move(z));
    a.scenes = std::move(kept);
  }
  return p;
}

AllocationResult allocate_scenes(const std::vector<MusicUnit>& units, const std::vector<Scene>& scenes,
                                 const Instruction& instruction, const Provider& provider,
                                 const AllocationConfig& config) {
  if (units.empty()) throw PreconditionError("no music units to allocate");
  if (scenes.empty()) throw PreconditionError("no scenes to allocate");
  if (scenes.size() < units.size())
    throw UserError("only " + std::to_string(scenes.size()) + " scenes for " + std::to_string(units.size()) +
                    " music units; disjoint allocation is impossible. Use a shorter music track or more footage.");

  Json unit_ctx = Json::array();
  for (const auto& u : units)
    unit_ctx.push_back({{"id", u.id}, {"start", u.start}, {"end", u.end}, {"label", u.label}, {"caption", u.caption}});
  Json scene_ctx = Json::array();
  for (const auto& z : scenes) scene_ctx.push_back({{"id", z.id}, {"summary", z.summary}});

  AllocationResult result;
  std::vector<std::string> forbidden;
  for (int attempt = 0;; ++attempt) {
    Json ctx = {{"units", unit_ctx}, {"scenes", scene_ctx}, {"instruction", instruction_json(instruction)}};
    if (!forbidden.empty()) ctx["forbidden_reuse"] = forbidden;
    auto res = provider.complete(make_request(Task::allocation, ctx));
    result.proposal = parse_proposal(res.parsed, units, scenes);
    const auto violations = validate_allocation(result.proposal);
    if (violations.empty()) return result;
    if (attempt >= config.max_regenerations) break;
    ++result.regenerations;
    for (const auto& v : violations)
      if (v.kind == AllocationViolationKind::shared_scene &&
          std::find(forbidden.begin(), forbidden.end(), v.scene) == forbidden.end())
        forbidden.push_back(v.scene);
  }

  result.proposal = repair_allocation(std::move(result.proposal));
  result.repaired = true;
  for (const auto& v : validate_allocation(result.proposal))
    if (v.kind == AllocationViolationKind::empty_unit)
      throw UnrecoverableSpecError("music unit " + v.first_unit + " has no scenes after allocation repair");
  return result;
}

std::vector<ShotSpec> plan_shots(const MusicUnit& unit, const std::vector<Scene>& assigned,
                                 const Instruction& instruction, const Provider& provider) {
  if (assigned.empty()) throw PreconditionError("unit " + unit.id + " has no assigned scenes");
  if (unit.end <= unit.start) throw PreconditionError("unit " + unit.id + " has non-positive length");

  std::vector<Seconds> cuts{unit.start};
  for (const auto& k : unit.keypoints)
    if (k.t > cuts.back() && k.t < unit.end) cuts.push_back(k.t);
  cuts.push_back(unit.end);
  const std::size_t n = cuts.size() - 1;

  Json slots = Json::array();
  for (std::size_t i = 0; i < n; ++i) slots.push_back({{"slot", i}, {"start", cuts[i]}, {"duration", cuts[i + 1] - cuts[i]}});
  Json pool = Json::array();
  for (const auto& z : assigned) pool.push_back({{"id", z.id}, {"summary", z.summary}});
  Json ctx = {{"unit", {{"id", unit.id}, {"label", unit.label}, {"caption", unit.caption}}},
              {"slots", slots},
              {"assigned", pool},
              {"instruction", instruction_json(instruction)}};

  auto in_pool = [&](const std::string& id) {
    return std::any_of(assigned.begin(), assigned.end(), [&](const Scene& z) { return z.id == id; });
  };
  std::vector<std::string> scene(n), description(n);
  std::vector<bool> ok(n, false);
  auto absorb = [&](const Json& parsed) {
    for (const auto& s : parsed.at("shots")) {
      const auto slot = s.at("slot").get<long long>();
      if (slot < 0 || static_cast<std::size_t>(slot) >= n) continue;
      const auto i = static_cast<std::size_t>(slot);
      if (ok[i]) continue;
      description[i] = s.at("description").get<std::string>();
      scene[i] = s.at("scene").get<std::string>();
      ok[i] = in_pool(scene[i]);
    }
  };

  absorb(provider.complete(make_request(Task::shot_plan, ctx)).parsed);
  if (std::find(ok.begin(), ok.end(), false) != ok.end()) {
    Json rejected = Json::array();
    for (std::size_t i = 0; i < n; ++i)
      if (!ok[i]) rejected.push_back({{"slot", i}, {"scene", scene[i]}});
    ctx["rejected"] = rejected;
    absorb(provider.complete(make_request(Task::shot_plan, ctx)).parsed);
  }

  std::vector<ShotSpec> specs;
  for (std::size_t i = 0; i < n; ++i) {
    ShotSpec s;
    char id[32];
    std::snprintf(id, sizeof id, "-P%02zu", i + 1);
    s.id = unit.id + id;
    s.unit = unit.id;
    s.slot_start = cuts[i];
    s.tau = cuts[i + 1] - cuts[i];
    s.description = description[i];
    if (ok[i]) {
      s.z_id = scene[i];
    } else {
      // Nearest assigned scene by summary embedding (first wins ties).
      if (s.description.empty()) s.description = first_sentence(assigned[i % assigned.size()].summary);
      const auto d = embed_text(s.description);
      double best = -2.0;
      for (const auto& z : assigned) {
        const double c = cosine(d, z.embedding.empty() ? embed_text(z.summary) : z.embedding);
        if (c > best) {
          best = c;
          s.z_id = z.id;
        }
      }
      s.repaired = true;
    }
    specs.push_back(std::move(s));
  }
  return specs;
}

ScriptPlan write_script(const std::vector<MusicUnit>& units, const std::vector<Scene>& scenes,
                        const Instruction& instruction, const Provider& provider, const AllocationConfig& config,
                        std::size_t workers) {
  ScriptPlan plan;
  plan.allocation = allocate_scenes(units, scenes, instruction, provider, config);
  std::vector<std::vector<ShotSpec>> per_unit(units.size());
  parallel_for(units.size(), workers, [&](std::size_t u) {
    std::vector<Scene> assigned;
    for (const auto& id : *plan.allocation.proposal.scenes_for(units[u].id))
      for (const auto& z : scenes)
        if (z.id == id) assigned.push_back(z);
    per_unit[u] = plan_shots(units[u], assigned, instruction, provider);
  });
  for (auto& specs : per_unit)
    for (auto& s : specs) plan.specs.push_back(std::move(s));
  return plan;
}

void to_json(Json& j, const AllocationProposal& p) {
  Json a = Json::array();
  for (const auto& x : p.assignments) a.push_back({{"unit", x.unit}, {"scenes", x.scenes}});
  j = {{"assignments", a}, {"storyline", p.storyline}};
}

void from_json(const Json& j, AllocationProposal& p) {
  p.assignments.clear();
  for (const auto& a : j.at("assignments"))
    p.assignments.push_back({a.at("unit").get<std::string>(), a.at("scenes").get<std::vector<std::string>>()});
  p.storyline = j.value("storyline", std::string{});
}

void to_json(Json& j, const ShotSpec& s) {
  j = {{"id", s.id},       {"unit", s.unit},
       {"tau", s.tau},     {"z_id", s.z_id},
       {"description", s.description}, {"slot_start", s.slot_start}};
  if (s.repaired) j["repaired"] = true;
}

void from_json(const Json& j, ShotSpec& s) {
  s.id = j.at("id").get<std::string>();
  s.unit = j.at("unit").get<std::string>();
  s.tau = j.at("tau").get<double>();
  s.z_id = j.at("z_id").get<std::string>();
  s.description = j.value("description", std::string{});
  s.slot_start = j.at("slot_start").get<double>();
  s.repaired = j.value("repaired", false);
  if (s.tau <= 0) throw UserError("shot spec " + s.id + " has non-positive tau");
}

void to_json(Json& j, const ScriptPlan& p) {
  j = {{"proposal", p.allocation.proposal},
       {"regenerations", p.allocation.regenerations},
       {"repaired", p.allocation.repaired},
       {"specs", p.specs}};
}

void from_json(const Json& j, ScriptPlan& p) {
  p.allocation.proposal = j.at("proposal").get<AllocationProposal>();
  p.allocation.regenerations = j.value("regenerations", 0);
  p.allocation.repaired = j.value("repaired", false);
  p.specs = j.at("specs").get<std::vector<ShotSpec>>();
}

}  // namespace montage
