#include "montage/editor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "montage/hash.hpp"
#include "montage/parallel.hpp"
#include "montage/provider.hpp"

namespace montage {
namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Json score_json(const TrimScore& s) { return {{"s_aes", s.s_aes}, {"r_prot", s.r_prot}, {"combined", s.combined}}; }

Json window_json(const Window& w) {
  return {{"shot", w.clip.origin_shot}, {"source", w.clip.source},       {"t_in", w.clip.t_in},
          {"t_out", w.clip.t_out},      {"start_frame", w.start_frame}, {"score", score_json(w.score)}};
}

}  // namespace

CandidatePool retrieve_candidates(const ShotSpec& spec, const Deconstruction& footage, const UsedIntervals& used,
                                  int level) {
  if (level < 0) throw PreconditionError("expansion level must be non-negative");
  if (spec.tau <= 0) throw PreconditionError("spec " + spec.id + " has non-positive tau");
  const auto idx = footage.scene_index(spec.z_id);
  if (idx == static_cast<std::size_t>(-1)) throw UserError("spec " + spec.id + " names unknown scene " + spec.z_id);

  std::vector<std::size_t> order{idx};
  for (int d = 1; d <= level; ++d) {
    if (idx >= static_cast<std::size_t>(d)) order.push_back(idx - static_cast<std::size_t>(d));
    if (idx + static_cast<std::size_t>(d) < footage.scenes.size()) order.push_back(idx + static_cast<std::size_t>(d));
  }

  CandidatePool pool{spec.id, {}, level};
  for (auto z : order) {
    for (const auto& id : footage.scenes[z].shots) {
      const Shot* shot = footage.find_shot(id);
      if (!shot || shot->duration() < spec.tau - 1e-9) continue;
      const auto spans = used.free_spans(shot->source, shot->interval());
      if (std::any_of(spans.begin(), spans.end(), [&](const Interval& s) { return s.length() >= spec.tau - 1e-9; }))
        pool.shots.push_back(id);
    }
  }
  return pool;
}

EditorWeights default_editor_weights(InstructionCategory category) {
  if (category == InstructionCategory::character_centric) return {0.4, 0.6};
  return {0.6, 0.4};
}

std::vector<Window> rank_windows(const Shot& shot, const ShotSpec& spec, const std::vector<FrameScore>& frames,
                                 const EditorWeights& w, const UsedIntervals& used, double fps) {
  if (fps <= 0) throw PreconditionError("keyframe fps must be positive");
  std::vector<Window> out;
  const double tau = spec.tau;
  const auto span = static_cast<std::size_t>(std::ceil(tau * fps - 1e-9));
  for (std::size_t k = 0;; ++k) {
    const Seconds t_in = shot.t_in + static_cast<double>(k) / fps;
    const Seconds t_out = t_in + tau;
    if (t_out > shot.t_out + 1e-9) break;
    if (used.intersects(shot.source, {t_in, t_out})) continue;
    Window win;
    win.clip = Clip{shot.source, t_in, t_out, shot.id, spec.id};
    win.start_frame = k;
    const std::size_t end = std::min(k + span, frames.size());
    if (end > k) {
      for (std::size_t j = k; j < end; ++j) {
        win.score.s_aes += frames[j].aes;
        win.score.r_prot += frames[j].prot;
      }
      win.score.s_aes /= static_cast<double>(end - k);
      win.score.r_prot /= static_cast<double>(end - k);
    }
    win.score.combined = w.alpha * win.score.s_aes + w.beta * win.score.r_prot;
    out.push_back(std::move(win));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Window& a, const Window& b) { return a.score.combined > b.score.combined; });
  return out;
}

std::optional<Window> trim_shot(const Shot& shot, const ShotSpec& spec, const std::vector<FrameScore>& frames,
                                const EditorWeights& w, const UsedIntervals& used, double fps) {
  auto ranked = rank_windows(shot, spec, frames, w, used, fps);
  if (ranked.empty()) return std::nullopt;
  return std::move(ranked.front());
}

std::optional<std::string> resolve_target(const Instruction& instruction,
                                          const std::vector<CharacterIdentity>& roster) {
  if (instruction.target && !instruction.target->empty()) {
    for (const auto& id : roster)
      if (id.matches(*instruction.target)) return id.name;
    return instruction.target;
  }
  if (instruction.category != InstructionCategory::character_centric) return std::nullopt;
  const auto text = lower(instruction.text);
  for (const auto& id : roster) {
    if (!id.name.empty() && text.find(lower(id.name)) != std::string::npos) return id.name;
    for (const auto& a : id.aliases)
      if (!a.empty() && text.find(lower(a)) != std::string::npos) return id.name;
  }
  return std::nullopt;
}

std::vector<FrameScore> score_frames(const Shot& shot, const std::optional<std::string>& target,
                                     const Provider& provider, double fps) {
  const auto count = shot.keyframes.empty() ? static_cast<std::size_t>(std::ceil(shot.duration() * fps - 1e-9))
                                            : shot.keyframes.size();
  Json ctx = {{"shot", shot.id}, {"t_in", shot.t_in}, {"fps", fps}, {"frame_count", count}};
  if (target) ctx["target"] = *target;
  Attachment a;
  a.kind = AttachmentKind::frames;
  a.ref = "shot:" + shot.id;
  std::string all;
  for (const auto& k : shot.keyframes) {
    all += k.hash;
    if (!k.still.empty()) a.files.push_back(k.still);
  }
  a.hash = short_hash(all.empty() ? a.ref : all);
  auto res = provider.complete(make_request(Task::trim_feedback, ctx, {a}));

  std::vector<FrameScore> out(count);
  const auto& frames = res.parsed.at("frames");
  for (std::size_t k = 0; k < count && k < frames.size(); ++k) {
    out[k].aes = std::clamp(frames[k].at("aes").get<double>(), 0.0, 1.0);
    out[k].prot = frames[k].at("present").get<bool>() ? 1.0 : 0.0;
  }
  if (!target)
    for (auto& f : out) f.prot = 1.0;
  return out;
}

Json EditorConfig::to_json() const {
  Json j = {{"max_expansion", max_expansion}, {"max_backtracks", max_backtracks}, {"tolerance", tolerance},
            {"keyframe_fps", keyframe_fps},   {"workers", workers}};
  if (weights) j["weights"] = {{"alpha", weights->alpha}, {"beta", weights->beta}};
  return j;
}

EditorConfig EditorConfig::from_json(const Json& j) {
  EditorConfig c;
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    c.weights = EditorWeights{w.at("alpha").get<double>(), w.at("beta").get<double>()};
    if (c.weights->alpha < 0 || c.weights->beta < 0) throw UserError("editor weights must be non-negative");
  }
  c.max_expansion = j.value("max_expansion", c.max_expansion);
  c.max_backtracks = j.value("max_backtracks", c.max_backtracks);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.keyframe_fps = j.value("keyframe_fps", c.keyframe_fps);
  c.workers = j.value("workers", c.workers);
  if (c.max_expansion < 0 || c.max_backtracks < 1) throw UserError("editor limits out of range");
  if (c.keyframe_fps <= 0) throw UserError("editor keyframe_fps must be positive");
  return c;
}

EditResult edit_loop(const std::vector<ShotSpec>& plan, const Deconstruction& footage, const Reviewer& reviewer,
                     const Provider& provider, const Instruction& instruction, const std::string& music_id,
                     const EditorConfig& config) {
  if (plan.empty()) throw PreconditionError("empty shot plan");
  const auto weights = config.weights.value_or(default_editor_weights(instruction.category));
  const auto target = resolve_target(instruction, footage.roster);

  std::vector<const ShotSpec*> order;
  for (const auto& s : plan) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const ShotSpec* a, const ShotSpec* b) { return a->slot_start < b->slot_start; });

  EditResult result;
  result.timeline.music = music_id;
  UsedIntervals used;
  std::map<std::string, std::vector<FrameScore>> scores;

  for (const ShotSpec* spec : order) {
    Json attempts = Json::array();
    std::set<std::pair<std::string, std::size_t>> excluded;
    std::optional<Window> best_soft;
    std::optional<Window> committed;
    int rejections = 0;
    int level = 0;
    int committed_level = 0;

    while (!committed && rejections < config.max_backtracks) {
      const auto pool = retrieve_candidates(*spec, footage, used, level);

      std::vector<const Shot*> missing;
      for (const auto& id : pool.shots)
        if (!scores.count(id)) missing.push_back(footage.find_shot(id));
      std::vector<std::vector<FrameScore>> fresh(missing.size());
      parallel_for(missing.size(), config.workers, [&](std::size_t i) {
        fresh[i] = score_frames(*missing[i], target, provider, config.keyframe_fps);
      });
      for (std::size_t i = 0; i < missing.size(); ++i) scores[missing[i]->id] = std::move(fresh[i]);

      std::vector<Window> candidates;
      for (const auto& id : pool.shots) {
        for (auto& w : rank_windows(*footage.find_shot(id), *spec, scores[id], weights, used, config.keyframe_fps))
          if (!excluded.count({id, w.start_frame})) candidates.push_back(std::move(w));
      }
      std::stable_sort(candidates.begin(), candidates.end(),
                       [](const Window& a, const Window& b) { return a.score.combined > b.score.combined; });

      if (candidates.empty()) {
        if (level >= config.max_expansion) break;
        ++level;
        spdlog::debug("{}: pool exhausted, expanding to level {}", spec->id, level);
        continue;
      }

      const Window& c = candidates.front();
      excluded.insert({c.clip.origin_shot, c.start_frame});
      Json attempt = window_json(c);
      attempt["level"] = level;

      if (auto guard = verify_integrity(c.clip, result.timeline, *spec, config.tolerance); !guard.empty()) {
        ReviewVerdict v{Decision::reject, std::move(guard), 0.0};
        attempt["guard"] = v;
        attempts.push_back(std::move(attempt));
        continue;
      }

      const Shot* shot = footage.find_shot(c.clip.origin_shot);
      ReviewContext ctx{spec, &result.timeline, &footage.roster, target, clip_keyframes(*shot, c.clip)};
      const auto verdict = reviewer.review(c.clip, ctx);
      attempt["verdict"] = verdict;
      attempts.push_back(std::move(attempt));
      spdlog::debug("{}: {} [{:.2f}, {:.2f}) combined {:.3f} -> {}", spec->id, c.clip.origin_shot, c.clip.t_in,
                    c.clip.t_out, c.score.combined, verdict.accepted() ? "accept" : "reject");

      if (verdict.accepted()) {
        committed = c;
        committed_level = level;
        break;
      }
      ++rejections;
      if (!verdict.has_hard() && (!best_soft || c.score.combined > best_soft->score.combined)) {
        best_soft = c;
        committed_level = level;
      }
    }

    Json entry = {{"spec", spec->id}, {"tau", spec->tau}, {"z_id", spec->z_id}, {"attempts", attempts},
                  {"backtracks", rejections}};
    if (!committed && best_soft) {
      committed = best_soft;
      std::string msg = spec->id + ": committed soft-rejected candidate " + best_soft->clip.origin_shot + " after " +
                        std::to_string(rejections) + " rejections";
      spdlog::warn("{}", msg);
      entry["warning"] = msg;
      result.warnings.push_back(std::move(msg));
    }
    if (!committed) {
      entry["error"] = "no committable candidate";
      result.trace.push_back(std::move(entry));
      throw UnrecoverableSpecError("spec " + spec->id + " (scene " + spec->z_id +
                                   "): no committable candidate up to expansion level " +
                                   std::to_string(config.max_expansion));
    }
    used.add(committed->clip.source, committed->clip.interval());
    result.timeline.clips.push_back(committed->clip);
    entry["expansion_level"] = committed_level;
    entry["committed"] = window_json(*committed);
    result.trace.push_back(std::move(entry));
    spdlog::info("{}: committed {} [{:.2f}, {:.2f}) level {}", spec->id, committed->clip.origin_shot,
                 committed->clip.t_in, committed->clip.t_out, committed_level);
  }
  return result;
}

}  // namespace montage
