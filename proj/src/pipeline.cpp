#include "montage/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>

#include <spdlog/spdlog.h>

#include "montage/audio.hpp"
#include "montage/eval.hpp"
#include "montage/frames.hpp"
#include "montage/hash.hpp"
#include "montage/provider.hpp"
#include "montage/provider_http.hpp"
#include "montage/provider_mock.hpp"
#include "montage/render.hpp"

namespace montage {
namespace {

constexpr int kArtifactVersion = 1;

Json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw UserError("cannot open " + p.string());
  auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UserError(p.string() + " is not valid JSON");
  return j;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw UserError("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, p);
}

std::string file_digest(const std::filesystem::path& p) {
  static std::mutex mu;
  static std::map<std::string, std::pair<std::filesystem::file_time_type, std::string>> memo;
  std::error_code ec;
  const auto mtime = std::filesystem::last_write_time(p, ec);
  if (ec) throw UserError("cannot read " + p.string());
  std::lock_guard lock(mu);
  auto it = memo.find(p.string());
  if (it != memo.end() && it->second.first == mtime) return it->second.second;
  auto h = sha256_file(p);
  memo[p.string()] = {mtime, h};
  return h;
}

/// Nearest upstream first, so a missing artifact names the skipped stage.
std::vector<Stage> dependencies(Stage s) {
  switch (s) {
    case Stage::deconstruct:
    case Stage::parse_audio: return {};
    case Stage::plan: return {Stage::deconstruct, Stage::parse_audio};
    case Stage::edit: return {Stage::plan, Stage::deconstruct, Stage::parse_audio};
    case Stage::render: return {Stage::edit, Stage::parse_audio};
    case Stage::eval: return {Stage::edit, Stage::parse_audio};
  }
  return {};
}

}  // namespace

Manifest Manifest::load(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (j.value("version", 0) != 1) throw UserError(path.string() + ": unsupported manifest version");
  Manifest m;
  m.path = std::filesystem::absolute(path);
  const auto root = m.path.parent_path();
  auto resolve = [&](const std::string& p) { return (root / p).lexically_normal(); };
  try {
    m.name = j.value("name", m.path.stem().string());
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& v : j.at("videos")) {
      ManifestVideo mv;
      mv.id = v.at("id").get<std::string>();
      mv.path = resolve(v.at("path").get<std::string>());
      if (v.contains("boundaries")) mv.boundaries = resolve(v.at("boundaries").get<std::string>());
      m.videos.push_back(std::move(mv));
    }
    m.music_id = j.at("music").value("id", m.music_id);
    m.music_path = resolve(j.at("music").at("path").get<std::string>());
    if (j.contains("subtitles")) m.subtitles = resolve(j.at("subtitles").get<std::string>());
    for (const auto& t : j.value("truth", Json::array())) m.truth.push_back(resolve(t.get<std::string>()));
    m.instruction = j.at("instruction").get<Instruction>();
    m.config = j.value("config", Json::object());
  } catch (const Json::exception& e) {
    throw UserError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
  if (m.videos.empty()) throw UserError(path.string() + ": no videos listed");
  return m;
}

Json PipelineConfig::to_json() const {
  return {{"footage", footage.to_json()},
          {"audio", audio.to_json()},
          {"allocation", {{"max_regenerations", allocation.max_regenerations}}},
          {"editor", editor.to_json()},
          {"reviewer", reviewer.to_json()},
          {"eval", {{"threshold", harmony_threshold}}},
          {"provider", {{"attempts", provider_attempts}, {"backoff", provider_backoff}, {"max_in_flight", max_in_flight}}},
          {"workers", workers}};
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  try {
    c.footage = FootageConfig::from_json(j.value("footage", Json::object()));
    c.audio = AnalysisConfig::from_json(j.value("audio", Json::object()));
    c.allocation.max_regenerations = j.value("allocation", Json::object()).value("max_regenerations", 2);
    c.editor = EditorConfig::from_json(j.value("editor", Json::object()));
    c.reviewer = ReviewerConfig::from_json(j.value("reviewer", Json::object()));
    c.harmony_threshold = j.value("eval", Json::object()).value("threshold", c.harmony_threshold);
    const auto p = j.value("provider", Json::object());
    c.provider_attempts = p.value("attempts", c.provider_attempts);
    c.provider_backoff = p.value("backoff", c.provider_backoff);
    c.max_in_flight = p.value("max_in_flight", c.max_in_flight);
    c.workers = j.value("workers", c.workers);
  } catch (const Json::exception& e) {
    throw UserError(std::string("malformed config: ") + e.what());
  }
  if (c.provider_attempts < 1 || c.max_in_flight < 1 || c.max_in_flight > 64)
    throw UserError("provider attempts must be >= 1 and max_in_flight in [1, 64]");
  if (c.workers == 0) throw UserError("workers must be positive");
  if (c.allocation.max_regenerations < 0) throw UserError("max_regenerations must be non-negative");
  c.footage.workers = c.workers;
  c.editor.workers = c.workers;
  return c;
}

PipelineConfig resolve_config(const Json& manifest_config, const Json& overrides) {
  Json merged = PipelineConfig{}.to_json();
  merged.merge_patch(manifest_config.is_object() ? manifest_config : Json::object());
  merged.merge_patch(overrides.is_object() ? overrides : Json::object());
  return PipelineConfig::from_json(merged);
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::deconstruct: return "deconstruct";
    case Stage::parse_audio: return "parse-audio";
    case Stage::plan: return "plan";
    case Stage::edit: return "edit";
    case Stage::render: return "render";
    case Stage::eval: return "eval";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  for (auto st : {Stage::deconstruct, Stage::parse_audio, Stage::plan, Stage::edit, Stage::render, Stage::eval})
    if (to_string(st) == s) return st;
  throw UserError("unknown stage '" + s + "'");
}

Pipeline::Pipeline(Manifest manifest, RunOptions options)
    : manifest_(std::move(manifest)), options_(std::move(options)) {
  if (options_.seed) manifest_.seed = *options_.seed;
  config_ = resolve_config(manifest_.config, options_.overrides);
  out_dir_ = options_.out_dir.empty() ? manifest_.path.parent_path() / "artifacts" : options_.out_dir;
  std::filesystem::create_directories(out_dir_);
  if (options_.provider != "mock" && options_.provider != "http" && !options_.provider_override)
    throw UserError("unknown provider '" + options_.provider + "' (expected mock or http)");
  provider_ = options_.provider_override;
}

Pipeline::~Pipeline() = default;

Provider& Pipeline::provider() {
  if (provider_) return *provider_;
  std::shared_ptr<Backend> backend;
  if (options_.provider == "http") {
    backend = std::make_shared<HttpBackend>(HttpConfig::from_env());
  } else {
    std::vector<GroundTruth> parts;
    for (const auto& t : manifest_.truth) parts.push_back(load_ground_truth(t));
    std::shared_ptr<const GroundTruth> truth;
    if (!parts.empty()) truth = std::make_shared<const GroundTruth>(merge_ground_truth(parts));
    backend = std::make_shared<MockBackend>(truth);
  }
  provider_ = std::make_shared<Provider>(backend, RetryPolicy{config_.provider_attempts, config_.provider_backoff},
                                         config_.max_in_flight);
  return *provider_;
}

std::size_t Pipeline::provider_sends() const { return provider_ ? provider_->sends() : 0; }

std::filesystem::path Pipeline::artifact_path(Stage stage) const {
  switch (stage) {
    case Stage::deconstruct: return out_dir_ / "deconstruct.json";
    case Stage::parse_audio: return out_dir_ / "audio.json";
    case Stage::plan: return out_dir_ / "plan.json";
    case Stage::edit: return out_dir_ / "edit.json";
    case Stage::render: return out_dir_ / "render.json";
    case Stage::eval: return out_dir_ / "harmony.json";
  }
  return out_dir_ / "unknown.json";
}

std::string Pipeline::stage_key(Stage stage) const {
  Json k = {{"stage", to_string(stage)}, {"version", kArtifactVersion}, {"seed", manifest_.seed}};
  std::string provider_id = options_.provider_override ? options_.provider_override->id() : options_.provider;
  if (provider_id == "http") {
    const char* model = std::getenv("MONTAGE_MODEL");
    provider_id += std::string(":") + (model ? model : "");
  }
  Json truth = Json::array();
  for (const auto& t : manifest_.truth) truth.push_back(file_digest(t));
  switch (stage) {
    case Stage::deconstruct: {
      Json videos = Json::array();
      for (const auto& v : manifest_.videos)
        videos.push_back({{"id", v.id},
                          {"media", file_digest(v.path)},
                          {"boundaries", v.boundaries ? file_digest(*v.boundaries) : ""}});
      k["videos"] = videos;
      k["subtitles"] = manifest_.subtitles ? file_digest(*manifest_.subtitles) : "";
      k["config"] = config_.footage.to_json();
      k["provider"] = provider_id;
      k["truth"] = truth;
      break;
    }
    case Stage::parse_audio:
      k["music"] = file_digest(manifest_.music_path);
      k["music_id"] = manifest_.music_id;
      k["config"] = config_.audio.to_json();
      k["provider"] = provider_id;
      k["truth"] = truth;
      break;
    case Stage::plan:
      k["upstream"] = {stage_key(Stage::deconstruct), stage_key(Stage::parse_audio)};
      k["instruction"] = manifest_.instruction;
      k["config"] = {{"max_regenerations", config_.allocation.max_regenerations}};
      k["provider"] = provider_id;
      break;
    case Stage::edit: {
      k["upstream"] = {stage_key(Stage::plan)};
      k["instruction"] = manifest_.instruction;
      auto editor = config_.editor.to_json();
      editor.erase("workers");
      k["config"] = {{"editor", editor}, {"reviewer", config_.reviewer.to_json()}};
      k["provider"] = provider_id;
      break;
    }
    case Stage::render:
      k["upstream"] = {stage_key(Stage::edit)};
      k["no_render"] = options_.no_render;
      break;
    case Stage::eval:
      k["upstream"] = {stage_key(Stage::edit)};
      k["threshold"] = config_.harmony_threshold;
      break;
  }
  return short_hash(k.dump());
}

Json Pipeline::load_current(Stage stage) const {
  const auto p = artifact_path(stage);
  const auto name = std::string(to_string(stage));
  if (!std::filesystem::exists(p))
    throw UserError("missing " + name + " artifact (" + p.string() + "); run the `" + name + "` stage first");
  auto j = read_json(p);
  if (j.value("key", std::string{}) != stage_key(stage))
    throw UserError("the " + name + " artifact is stale for the current inputs; re-run the `" + name + "` stage");
  return j.at("data");
}

void Pipeline::write_artifact(Stage stage, const std::string& key, const Json& data) const {
  Json env = {{"artifact", to_string(stage)}, {"version", kArtifactVersion}, {"key", key}, {"data", data}};
  write_file(artifact_path(stage), env.dump(2) + "\n");
}

MediaRef Pipeline::music_ref() const {
  MediaRef m;
  m.id = manifest_.music_id;
  m.path = manifest_.music_path;
  m.kind = MediaKind::audio;
  return m;
}

std::vector<MediaRef> Pipeline::video_refs() const {
  std::vector<MediaRef> out;
  for (const auto& v : manifest_.videos) {
    MediaRef m;
    m.id = v.id;
    m.path = v.path;
    m.kind = MediaKind::video;
    m.duration = is_synthetic_video(v.path) ? load_ground_truth(v.path).duration : probe_duration(v.path);
    if (!m.usable()) throw UserError("video " + v.id + " has zero duration");
    out.push_back(std::move(m));
  }
  return out;
}

StageOutcome Pipeline::run_stage(Stage stage) {
  StageOutcome o{stage, stage_key(stage), false};
  const auto p = artifact_path(stage);
  if (std::filesystem::exists(p)) {
    auto j = Json::parse(std::ifstream(p), nullptr, false);
    if (!j.is_discarded() && j.value("key", std::string{}) == o.key) {
      spdlog::info("[{}] cache hit ({})", to_string(stage), o.key);
      o.cache_hit = true;
      return o;
    }
  }
  for (auto dep : dependencies(stage)) (void)load_current(dep);
  spdlog::info("[{}] running ({})", to_string(stage), o.key);
  Json data;
  switch (stage) {
    case Stage::deconstruct: data = run_deconstruct(); break;
    case Stage::parse_audio: data = run_parse_audio(); break;
    case Stage::plan: data = run_plan(); break;
    case Stage::edit: data = run_edit(); break;
    case Stage::render: data = run_render(); break;
    case Stage::eval: data = run_eval(); break;
  }
  write_artifact(stage, o.key, data);
  return o;
}

PipelineResult Pipeline::run_all() {
  PipelineResult r;
  std::vector<Stage> order{Stage::deconstruct, Stage::parse_audio, Stage::plan};
  if (!options_.plan_only) order.insert(order.end(), {Stage::edit, Stage::render, Stage::eval});
  for (auto s : order) r.stages.push_back(run_stage(s));
  r.provider_sends = provider_sends();
  r.warnings = warnings_;
  return r;
}

Json Pipeline::run_deconstruct() {
  std::vector<VideoInput> inputs;
  auto refs = video_refs();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    VideoInput in;
    in.media = refs[i];
    in.boundaries = manifest_.videos[i].boundaries;
    if (is_synthetic_video(refs[i].path))
      in.frames = std::make_shared<SyntheticVideoSource>(
          std::make_shared<const GroundTruth>(load_ground_truth(refs[i].path)));
    else
      in.frames = std::make_shared<FfmpegFrameSource>();
    inputs.push_back(std::move(in));
  }
  std::vector<SubtitleLine> transcript;
  if (manifest_.subtitles) transcript = load_srt(*manifest_.subtitles);
  if (transcript.empty()) spdlog::info("[deconstruct] no subtitle lines; roster stays anonymous");
  auto cfg = config_.footage;
  if (options_.provider == "http" && !options_.provider_override) cfg.stills_dir = out_dir_ / "stills";
  auto d = deconstruct(inputs, transcript, provider(), cfg);
  spdlog::info("[deconstruct] {} shots, {} scenes, {} identities", d.shots.size(), d.scenes.size(), d.roster.size());
  return d;
}

Json Pipeline::run_parse_audio() {
  auto audio = read_wav(manifest_.music_path);
  auto a = analyze_audio(audio, &provider(), config_.audio, {manifest_.music_path.string()});
  spdlog::info("[parse-audio] {:.2f} s, {:.1f} BPM, {} units, {} keypoints", a.duration, a.bpm, a.units.size(),
               a.keypoints.size());
  return a;
}

Json Pipeline::run_plan() {
  const auto d = load_current(Stage::deconstruct).get<Deconstruction>();
  const auto a = load_current(Stage::parse_audio).get<AudioAnalysis>();
  auto plan = write_script(a.units, d.scenes, manifest_.instruction, provider(), config_.allocation, config_.workers);
  spdlog::info("[plan] {} specs over {} units (regenerations {}, repaired {})", plan.specs.size(), a.units.size(),
               plan.allocation.regenerations, plan.allocation.repaired);
  return plan;
}

Json Pipeline::run_edit() {
  const auto d = load_current(Stage::deconstruct).get<Deconstruction>();
  const auto a = load_current(Stage::parse_audio).get<AudioAnalysis>();
  const auto plan = load_current(Stage::plan).get<ScriptPlan>();
  StandardReviewer reviewer(provider(), config_.reviewer);
  auto result = edit_loop(plan.specs, d, reviewer, provider(), manifest_.instruction, manifest_.music_id,
                          config_.editor);
  auto music = music_ref();
  music.duration = a.duration;
  const auto sources = video_refs();
  auto validated = ValidatedTimeline::require(result.timeline, music, config_.reviewer.tolerance, sources);
  for (const auto& w : result.warnings) warnings_.push_back(w);
  write_file(timeline_path(), Json(validated.timeline()).dump(2) + "\n");
  spdlog::info("[edit] {} clips, {:.3f} s, {} warnings", result.timeline.clips.size(),
               timeline_duration(result.timeline), result.warnings.size());
  return {{"timeline", validated.timeline()}, {"trace", result.trace}, {"warnings", result.warnings}};
}

Json Pipeline::run_render() {
  const auto a = load_current(Stage::parse_audio).get<AudioAnalysis>();
  const auto timeline = load_current(Stage::edit).at("timeline").get<Timeline>();
  auto music = music_ref();
  music.duration = a.duration;
  const auto sources = video_refs();
  const auto validated = ValidatedTimeline::require(timeline, music, config_.reviewer.tolerance, sources);
  const auto edl = export_edl(validated, music, sources);
  write_file(edl_path(), to_json(edl).dump(2) + "\n");
  Json data = {{"edl", edl_path().filename().string()}, {"rendered", false}};
  if (options_.no_render) {
    data["notice"] = "render disabled (--no-render); EDL written";
    spdlog::info("[render] {}", data["notice"].get<std::string>());
    return data;
  }
  const auto output = out_dir_ / "montage.mp4";
  auto r = render_video(edl, output);
  data["rendered"] = r.rendered;
  if (r.rendered) {
    data["output"] = output.filename().string();
    data["probed_duration"] = r.probed_duration;
  } else {
    data["notice"] = r.notice;
  }
  return data;
}

Json Pipeline::run_eval() {
  const auto a = load_current(Stage::parse_audio).get<AudioAnalysis>();
  const auto timeline = load_current(Stage::edit).at("timeline").get<Timeline>();
  const auto grid = a.grid();
  const auto report = av_harmony(timeline, grid, config_.harmony_threshold);
  const auto sweep = harmony_sweep(timeline, grid);
  write_file(out_dir_ / "harmony_sweep.csv", sweep_csv(sweep));
  spdlog::info("[eval] aligned fraction {:.3f} at {:.2f} s over {} cuts", report.aligned_fraction,
               report.threshold, report.cuts.size());
  return {{"report", report}, {"sweep", sweep}, {"grid_size", grid.size()}};
}

}  // namespace montage
