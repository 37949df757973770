#include "montage/provider.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <thread>

namespace montage {
namespace {

constexpr std::array<std::pair<Task, std::string_view>, 10> kTaskNames{{
    {Task::shot_caption, "shot_caption"},
    {Task::scene_summary, "scene_summary"},
    {Task::identity_inference, "identity_inference"},
    {Task::music_structure, "music_structure"},
    {Task::music_caption, "music_caption"},
    {Task::allocation, "allocation"},
    {Task::shot_plan, "shot_plan"},
    {Task::identity_check, "identity_check"},
    {Task::quality_check, "quality_check"},
    {Task::trim_feedback, "trim_feedback"},
}};

Json str() { return {{"type", "string"}}; }
Json num01() { return {{"type", "number"}, {"minimum", 0.0}, {"maximum", 1.0}}; }
Json obj(Json props, std::vector<std::string> required) {
  return {{"type", "object"}, {"properties", std::move(props)}, {"required", required}};
}
Json arr(Json items) { return {{"type", "array"}, {"items", std::move(items)}}; }

Json build_schema(Task t) {
  switch (t) {
    case Task::shot_caption:
      return obj({{"cinematography", obj({{"text", str()}, {"scale", str()}}, {"text", "scale"})},
                  {"characters", arr(obj({{"name", str()}, {"salience", num01()}},
                                         {"name", "salience"}))},
                  {"environment", str()},
                  {"action", str()}},
                 {"cinematography", "characters", "environment", "action"});
    case Task::scene_summary:
      return obj({{"summary", str()}}, {"summary"});
    case Task::identity_inference:
      return obj({{"identities", arr(obj({{"name", str()}, {"role", str()}, {"aliases", arr(str())}},
                                         {"name", "role"}))}},
                 {"identities"});
    case Task::music_structure:
      return obj({{"sections", arr(obj({{"start", {{"type", "number"}, {"minimum", 0.0}}},
                                        {"end", {{"type", "number"}, {"minimum", 0.0}}},
                                        {"label", str()}},
                                       {"start", "end", "label"}))}},
                 {"sections"});
    case Task::music_caption:
      return obj({{"caption", str()}}, {"caption"});
    case Task::allocation:
      return obj({{"assignments", arr(obj({{"unit", str()}, {"scenes", arr(str())}},
                                          {"unit", "scenes"}))},
                  {"storyline", str()}},
                 {"assignments", "storyline"});
    case Task::shot_plan:
      return obj({{"shots", arr(obj({{"slot", {{"type", "integer"}, {"minimum", 0}}},
                                     {"scene", str()},
                                     {"description", str()}},
                                    {"slot", "scene", "description"}))}},
                 {"shots"});
    case Task::identity_check:
      return obj({{"present", {{"type", "boolean"}}}, {"salient", {{"type", "boolean"}}}},
                 {"present", "salient"});
    case Task::quality_check:
      return obj({{"score", num01()}, {"rubric", str()}}, {"score", "rubric"});
    case Task::trim_feedback:
      return obj({{"frames", arr(obj({{"aes", num01()}, {"present", {{"type", "boolean"}}}},
                                     {"aes", "present"}))}},
                 {"frames"});
  }
  return Json::object();
}

std::string_view instruction_text(Task t) {
  switch (t) {
    case Task::shot_caption:
      return "Describe this shot from its keyframes: cinematography (text and shot scale), "
             "characters with salience in [0,1], environment and action. Use roster names "
             "instead of generic references whenever a rostered character is shown.";
    case Task::scene_summary:
      return "Summarize the scene from its member shot captions in one paragraph. Refer to "
             "rostered characters by name.";
    case Task::identity_inference:
      return "From the dialogue transcript, list the characters with name, role and aliases.";
    case Task::music_structure:
      return "Partition the track into coarse structural sections (intro, verse, chorus, "
             "bridge, outro, other) with start and end times in seconds.";
    case Task::music_caption:
      return "Describe the local rhythm, emotion and energy of this music section.";
    case Task::allocation:
      return "Assign scenes to music units following the instruction. Every unit needs at "
             "least one scene and no scene may be assigned to two units. Never use scenes "
             "listed under `forbidden_reuse` in more than one unit. Provide a storyline.";
    case Task::shot_plan:
      return "For each slot of this music unit choose one scene from `assigned` and write a "
             "short visual description consistent with the scene summary and instruction.";
    case Task::identity_check:
      return "Is the target character present in this frame as the salient subject (not a "
             "background extra, occluded or unrecognizable)?";
    case Task::quality_check:
      return "Rate the visual quality of this clip in [0,1] and give a short rubric.";
    case Task::trim_feedback:
      return "For each keyframe give an aesthetic score in [0,1] and whether the target "
             "character is present.";
  }
  return "";
}

bool type_matches(const std::string& type, const Json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer() || v.is_number_unsigned();
  if (type == "boolean") return v.is_boolean();
  return false;
}

// Models often wrap JSON in a markdown fence.
std::string_view strip_fence(std::string_view s) {
  auto trim = [](std::string_view v) {
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
    return v;
  };
  s = trim(s);
  if (s.starts_with("```") && s.ends_with("```") && s.size() >= 6) {
    s.remove_suffix(3);
    s.remove_prefix(s.find('\n') == std::string_view::npos ? 3 : s.find('\n') + 1);
  }
  return trim(s);
}

std::string parse_and_validate(Task task, const std::string& raw, Json& parsed) {
  parsed = Json::parse(strip_fence(raw), nullptr, false);
  if (parsed.is_discarded()) return "reply is not valid JSON";
  return validate_against(response_schema(task), parsed);
}

}  // namespace

std::string_view to_string(Task t) {
  for (auto [task, name] : kTaskNames)
    if (task == t) return name;
  return "unknown";
}

Task parse_task(std::string_view s) {
  for (auto [task, name] : kTaskNames)
    if (name == s) return task;
  throw PreconditionError("unknown task " + std::string(s));
}

std::string_view to_string(AttachmentKind k) {
  switch (k) {
    case AttachmentKind::frames: return "frames";
    case AttachmentKind::audio_segment: return "audio_segment";
    case AttachmentKind::text: return "text";
  }
  return "text";
}

const Json& response_schema(Task task) {
  static const std::map<Task, Json> schemas = [] {
    std::map<Task, Json> m;
    for (auto [t, _] : kTaskNames) m.emplace(t, build_schema(t));
    return m;
  }();
  return schemas.at(task);
}

std::string schema_id(Task task) { return std::string(to_string(task)) + ".v1"; }

ModelRequest make_request(Task task, Json context, std::vector<Attachment> attachments) {
  if (context.is_null()) context = Json::object();
  ModelRequest r;
  r.task = task;
  r.schema_id = schema_id(task);
  r.prompt = std::string(instruction_text(task)) + "\n\nContext:\n" + context.dump(2) +
             "\n\nReply with a single JSON object matching this schema:\n" +
             response_schema(task).dump();
  r.context = std::move(context);
  r.attachments = std::move(attachments);
  return r;
}

std::string validate_against(const Json& schema, const Json& value, const std::string& path) {
  if (schema.contains("type")) {
    auto type = schema["type"].get<std::string>();
    if (!type_matches(type, value)) return path + ": expected " + type;
  }
  if (schema.contains("minimum") && value.is_number() &&
      value.get<double>() < schema["minimum"].get<double>())
    return path + ": below minimum " + schema["minimum"].dump();
  if (schema.contains("maximum") && value.is_number() &&
      value.get<double>() > schema["maximum"].get<double>())
    return path + ": above maximum " + schema["maximum"].dump();
  if (schema.contains("enum")) {
    const auto& e = schema["enum"];
    if (std::find(e.begin(), e.end(), value) == e.end()) return path + ": not an allowed value";
  }
  if (value.is_object() && schema.contains("required")) {
    for (const auto& key : schema["required"])
      if (!value.contains(key.get<std::string>()))
        return path + ": missing required field '" + key.get<std::string>() + "'";
  }
  if (value.is_object() && schema.contains("properties")) {
    for (const auto& [key, sub] : schema["properties"].items()) {
      if (!value.contains(key)) continue;
      auto err = validate_against(sub, value[key], path + "." + key);
      if (!err.empty()) return err;
    }
  }
  if (value.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      auto err = validate_against(schema["items"], value[i], path + "[" + std::to_string(i) + "]");
      if (!err.empty()) return err;
    }
  }
  return {};
}

void check_attachments(const ModelRequest& request) {
  bool needs_frames = false;
  std::vector<AttachmentKind> allowed{AttachmentKind::text};
  switch (request.task) {
    case Task::shot_caption:
    case Task::identity_check:
    case Task::quality_check:
    case Task::trim_feedback:
      needs_frames = true;
      allowed.push_back(AttachmentKind::frames);
      break;
    case Task::music_structure:
    case Task::music_caption:
      allowed.push_back(AttachmentKind::audio_segment);
      break;
    default:
      break;
  }
  bool has_frames = false;
  for (const auto& a : request.attachments) {
    if (std::find(allowed.begin(), allowed.end(), a.kind) == allowed.end())
      throw PreconditionError(std::string(to_string(a.kind)) + " attachment is not valid for task " +
                              std::string(to_string(request.task)));
    has_frames = has_frames || a.kind == AttachmentKind::frames;
  }
  if (needs_frames && !has_frames)
    throw PreconditionError("task " + std::string(to_string(request.task)) +
                            " requires a frames attachment");
}

Provider::Provider(std::shared_ptr<Backend> backend, RetryPolicy retry, int max_in_flight)
    : state_(std::make_shared<State>(std::move(backend), retry, std::clamp(max_in_flight, 1, 64))) {
  if (!state_->backend) throw PreconditionError("provider needs a backend");
}

void Provider::route(Task task, std::shared_ptr<Backend> backend) {
  std::lock_guard lock(state_->routes_mu);
  state_->routes[task] = std::move(backend);
}

std::string Provider::id() const { return state_->backend->id(); }

std::string Provider::send_with_retry(Backend& backend, const ModelRequest& request) const {
  const int attempts = std::max(1, state_->retry.attempts);
  for (int attempt = 0;; ++attempt) {
    try {
      ++state_->sends;
      return backend.send(request);
    } catch (const TransportError&) {
      if (attempt + 1 >= attempts) throw;
      auto delay = state_->retry.initial_backoff * std::pow(2.0, attempt);
      if (delay > 0) std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
  }
}

ModelResponse Provider::complete(ModelRequest request) const {
  check_attachments(request);
  if (request.schema_id.empty()) request.schema_id = schema_id(request.task);

  std::shared_ptr<Backend> backend;
  {
    std::lock_guard lock(state_->routes_mu);
    auto it = state_->routes.find(request.task);
    backend = it != state_->routes.end() ? it->second : state_->backend;
  }

  state_->in_flight.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{state_->in_flight};

  const auto start = std::chrono::steady_clock::now();
  ModelResponse resp;
  resp.provider_id = backend->id();
  resp.raw = send_with_retry(*backend, request);
  auto err = parse_and_validate(request.task, resp.raw, resp.parsed);
  if (!err.empty()) {
    ++state_->reprompts;
    ModelRequest repair = request;
    repair.prompt += "\n\nYour previous reply was rejected: " + err +
                     "\nReply again with only a JSON object matching the schema.";
    repair.context["schema_error"] = err;
    resp.raw = send_with_retry(*backend, repair);
    err = parse_and_validate(request.task, resp.raw, resp.parsed);
    if (!err.empty())
      throw SchemaError(std::string(to_string(request.task)) +
                        " reply failed schema validation after reprompt: " + err);
  }
  resp.latency =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

std::string ScriptedBackend::send(const ModelRequest& request) {
  std::size_t index;
  {
    std::lock_guard lock(mu_);
    index = log_.size();
    log_.push_back(request);
  }
  return script_(request, index);
}

std::vector<ModelRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ScriptedBackend::count(Task task) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      log_.begin(), log_.end(), [&](const ModelRequest& r) { return r.task == task; }));
}

}  // namespace montage
