#include "montage/reviewer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "montage/hash.hpp"
#include "montage/provider.hpp"

namespace montage {
namespace {

Attachment frame_attachment(const std::string& ref, const std::vector<const Keyframe*>& frames) {
  Attachment a;
  a.kind = AttachmentKind::frames;
  a.ref = ref;
  std::string all;
  for (const auto* k : frames) {
    all += k->hash;
    if (!k->still.empty()) a.files.push_back(k->still);
  }
  a.hash = short_hash(all.empty() ? ref : all);
  return a;
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::identity: return "identity";
    case Criterion::overlap: return "overlap";
    case Criterion::duration: return "duration";
    case Criterion::quality: return "quality";
  }
  return "quality";
}

bool ReviewVerdict::has_hard() const {
  return std::any_of(reasons.begin(), reasons.end(), [](const ReviewReason& r) { return r.hard; });
}

Json ReviewerConfig::to_json() const {
  return {{"min_ratio", min_ratio},     {"min_quality", min_quality}, {"tolerance", tolerance},
          {"probe_frames", probe_frames}, {"min_luma", min_luma},       {"max_luma", max_luma},
          {"frozen_change", frozen_change}};
}

ReviewerConfig ReviewerConfig::from_json(const Json& j) {
  ReviewerConfig c;
  c.min_ratio = j.value("min_ratio", c.min_ratio);
  c.min_quality = j.value("min_quality", c.min_quality);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.probe_frames = j.value("probe_frames", c.probe_frames);
  c.min_luma = j.value("min_luma", c.min_luma);
  c.max_luma = j.value("max_luma", c.max_luma);
  c.frozen_change = j.value("frozen_change", c.frozen_change);
  if (c.min_ratio < 0 || c.min_ratio > 1 || c.min_quality < 0 || c.min_quality > 1)
    throw UserError("reviewer thresholds must lie in [0, 1]");
  if (c.tolerance < 0) throw UserError("reviewer tolerance must be non-negative");
  if (c.probe_frames == 0) throw UserError("probe_frames must be positive");
  return c;
}

std::vector<Keyframe> clip_keyframes(const Shot& shot, const Clip& clip) {
  std::vector<Keyframe> out;
  for (const auto& k : shot.keyframes)
    if (k.t >= clip.t_in - 1e-9 && k.t < clip.t_out - 1e-9) out.push_back(k);
  return out;
}

IdentityResult verify_identity(const Clip& clip, const std::vector<Keyframe>& keyframes,
                               const std::vector<CharacterIdentity>& roster, const std::optional<std::string>& target,
                               const Provider& provider, double min_ratio, std::size_t probe) {
  IdentityResult r;
  if (!target || target->empty()) return r;
  const std::size_t n = keyframes.size();
  if (n == 0) {
    r.ratio = 0.0;
    r.pass = false;
    return r;
  }
  Json roster_json = Json::array();
  for (const auto& id : roster) roster_json.push_back(id);

  std::vector<int> seen(n, -1);
  auto check = [&](std::size_t k) {
    if (seen[k] >= 0) return seen[k] == 1;
    const auto& f = keyframes[k];
    Json ctx = {{"source", clip.source}, {"time", f.t}, {"target", *target}, {"roster", roster_json}};
    auto res = provider.complete(make_request(
        Task::identity_check, ctx, {frame_attachment("frame:" + clip.source + "@" + fmt("%.3f", f.t), {&f})}));
    ++r.calls;
    const bool ok = res.parsed.at("present").get<bool>() && res.parsed.at("salient").get<bool>();
    seen[k] = ok ? 1 : 0;
    return ok;
  };

  const std::size_t m = std::min(probe, n);
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < m; ++j) {
    const auto k = m == 1 ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(j) * (n - 1) / (m - 1)));
    if (idx.empty() || idx.back() != k) idx.push_back(k);
  }
  std::size_t hits = 0;
  for (auto k : idx) hits += check(k) ? 1 : 0;
  if (hits == 0 || hits == idx.size()) {
    r.ratio = static_cast<double>(hits) / static_cast<double>(idx.size());
  } else {
    hits = 0;
    for (std::size_t k = 0; k < n; ++k) hits += check(k) ? 1 : 0;
    r.ratio = static_cast<double>(hits) / static_cast<double>(n);
  }
  r.pass = r.ratio >= min_ratio;
  return r;
}

std::vector<ReviewReason> verify_integrity(const Clip& clip, const Timeline& committed, const ShotSpec& spec,
                                           Seconds tolerance) {
  std::vector<ReviewReason> out;
  for (std::size_t i = 0; i < committed.clips.size(); ++i) {
    const auto& c = committed.clips[i];
    if (c.source == clip.source && c.interval().overlaps(clip.interval())) {
      out.push_back({Criterion::overlap,
                     "overlaps committed clip " + std::to_string(i) + " (" + c.spec_id + ") on " + c.source +
                         fmt(" by %.3f s", std::min(c.t_out, clip.t_out) - std::max(c.t_in, clip.t_in)),
                     true});
      break;
    }
  }
  const double err = std::abs(clip.duration() - spec.tau);
  if (err > tolerance)
    out.push_back({Criterion::duration, fmt("duration %.3f s differs from target %.3f s by %.3f s", clip.duration(),
                                             spec.tau, err),
                   true});
  return out;
}

QualityResult verify_quality(const Clip& clip, const std::vector<Keyframe>& keyframes, const Provider& provider,
                             const ReviewerConfig& config) {
  QualityResult q;
  if (!keyframes.empty()) {
    double luma = 0.0;
    for (const auto& k : keyframes) luma += k.luma;
    luma /= static_cast<double>(keyframes.size());
    if (luma < config.min_luma || luma > config.max_luma) {
      q.pass = false;
      q.reason = ReviewReason{Criterion::quality,
                              fmt("mean luma %.3f outside [%.2f, %.2f]", luma, config.min_luma, config.max_luma), false};
      return q;
    }
    if (keyframes.size() >= 2) {
      bool frozen = true;
      for (std::size_t k = 1; k < keyframes.size() && frozen; ++k) frozen = keyframes[k].change < config.frozen_change;
      if (frozen) {
        q.pass = false;
        q.reason = ReviewReason{Criterion::quality, "frozen frames (no change between keyframes)", false};
        return q;
      }
    }
  }
  std::vector<const Keyframe*> ptrs;
  for (const auto& k : keyframes) ptrs.push_back(&k);
  Json ctx = {{"source", clip.source}, {"t_in", clip.t_in}, {"t_out", clip.t_out}, {"shot", clip.origin_shot}};
  q.provider_called = true;
  auto res = provider.complete(make_request(
      Task::quality_check, ctx,
      {frame_attachment("clip:" + clip.source + "@" + fmt("%.3f-%.3f", clip.t_in, clip.t_out), ptrs)}));
  const double score = res.parsed.at("score").get<double>();
  if (score < config.min_quality) {
    q.pass = false;
    q.reason = ReviewReason{Criterion::quality,
                            res.parsed.at("rubric").get<std::string>() + fmt(" (score %.2f < %.2f)", score,
                                                                              config.min_quality),
                            false};
  }
  return q;
}

ReviewVerdict StandardReviewer::review(const Clip& clip, const ReviewContext& ctx) const {
  ReviewVerdict v;
  static const Timeline kEmpty;
  static const std::vector<CharacterIdentity> kNoRoster;
  if (ctx.spec) {
    v.reasons = verify_integrity(clip, ctx.committed ? *ctx.committed : kEmpty, *ctx.spec, config_.tolerance);
    if (!v.reasons.empty()) {
      v.decision = Decision::reject;
      return v;
    }
  }
  try {
    auto id = verify_identity(clip, ctx.keyframes, ctx.roster ? *ctx.roster : kNoRoster, ctx.target, provider_,
                              config_.min_ratio, config_.probe_frames);
    v.presence_ratio = id.ratio;
    if (!id.pass)
      v.reasons.push_back({Criterion::identity,
                           fmt("presence ratio %.2f below %.2f for ", id.ratio, config_.min_ratio) + *ctx.target,
                           false});
  } catch (const ProviderError&) {
    v.presence_ratio = 0.0;
    v.reasons.push_back({Criterion::identity, "provider unavailable", false});
  }
  try {
    auto q = verify_quality(clip, ctx.keyframes, provider_, config_);
    if (!q.pass) v.reasons.push_back(*q.reason);
  } catch (const ProviderError&) {
    v.reasons.push_back({Criterion::quality, "provider unavailable", false});
  }
  v.decision = v.reasons.empty() ? Decision::accept : Decision::reject;
  return v;
}

void to_json(Json& j, const ReviewReason& r) {
  j = {{"criterion", to_string(r.criterion)}, {"detail", r.detail}, {"hard", r.hard}};
}

void to_json(Json& j, const ReviewVerdict& v) {
  Json reasons = Json::array();
  for (const auto& r : v.reasons) reasons.push_back(r);
  j = {{"decision", v.accepted() ? "accept" : "reject"}, {"reasons", reasons}, {"presence_ratio", v.presence_ratio}};
}

}  // namespace montage
