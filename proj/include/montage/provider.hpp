#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "montage/core.hpp"

namespace montage {

enum class Task {
  shot_caption,
  scene_summary,
  identity_inference,
  music_structure,
  music_caption,
  allocation,
  shot_plan,
  identity_check,
  quality_check,
  trim_feedback,
};

std::string_view to_string(Task t);
Task parse_task(std::string_view s);

enum class AttachmentKind { frames, audio_segment, text };

std::string_view to_string(AttachmentKind k);

struct Attachment {
  AttachmentKind kind = AttachmentKind::text;
  /// Logical reference, e.g. "shot:S0003" or "clip:footage@12.5-14.0".
  std::string ref;
  /// Content hash of the payload (frame pixels, audio bytes or text).
  std::string hash;
  /// Files uploaded by network providers (JPEG keyframes, WAV excerpts).
  std::vector<std::filesystem::path> files;
  /// Inline text payload for AttachmentKind::text.
  std::string text;
};

struct ModelRequest {
  Task task = Task::shot_caption;
  std::string prompt;
  /// Structured inputs; also rendered into `prompt`.
  Json context = Json::object();
  std::vector<Attachment> attachments;
  std::string schema_id;
};

struct ModelResponse {
  std::string raw;
  Json parsed;
  std::string provider_id;
  Seconds latency = 0.0;
};

/// Builds a request whose prompt holds the task instruction, the context
/// JSON and the expected response schema.
ModelRequest make_request(Task task, Json context, std::vector<Attachment> attachments = {});

/// JSON-schema subset (type/properties/required/items/minimum/maximum/enum)
/// describing the expected response of each task.
const Json& response_schema(Task task);
std::string schema_id(Task task);

/// Empty string when `value` conforms to `schema`; else the first error.
std::string validate_against(const Json& schema, const Json& value, const std::string& path = "$");

/// Throws PreconditionError when the attachments do not fit the task.
void check_attachments(const ModelRequest& request);

/// Transport to one model backend. `send` returns raw model text and throws
/// TransportError (retryable) or CredentialError/ProviderError (fatal).
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::string send(const ModelRequest& request) = 0;
};

struct RetryPolicy {
  int attempts = 3;
  Seconds initial_backoff = 1.0;
};

/// Schema-validated completion with retries, one repair reprompt, per-task
/// routing and a global in-flight cap. Copies share state.
class Provider {
 public:
  Provider(std::shared_ptr<Backend> backend, RetryPolicy retry = {}, int max_in_flight = 4);

  ModelResponse complete(ModelRequest request) const;

  /// Routes `task` to a different backend.
  void route(Task task, std::shared_ptr<Backend> backend);

  std::string id() const;
  /// Backend sends issued so far (including retries and reprompts).
  std::size_t sends() const { return state_->sends.load(); }
  std::size_t reprompts() const { return state_->reprompts.load(); }

 private:
  struct State {
    std::shared_ptr<Backend> backend;
    std::map<Task, std::shared_ptr<Backend>> routes;
    RetryPolicy retry;
    std::counting_semaphore<64> in_flight;
    std::atomic<std::size_t> sends{0};
    std::atomic<std::size_t> reprompts{0};
    mutable std::mutex routes_mu;
    State(std::shared_ptr<Backend> b, RetryPolicy r, int cap)
        : backend(std::move(b)), retry(r), in_flight(cap) {}
  };

  std::string send_with_retry(Backend& backend, const ModelRequest& request) const;

  std::shared_ptr<State> state_;
};

/// Backend driven by a callback; records every request it receives. Used for
/// fault injection.
class ScriptedBackend : public Backend {
 public:
  using Script = std::function<std::string(const ModelRequest&, std::size_t call_index)>;

  explicit ScriptedBackend(Script script, std::string id = "scripted")
      : script_(std::move(script)), id_(std::move(id)) {}

  std::string id() const override { return id_; }
  std::string send(const ModelRequest& request) override;

  std::vector<ModelRequest> requests() const;
  std::size_t count(Task task) const;

 private:
  Script script_;
  std::string id_;
  mutable std::mutex mu_;
  std::vector<ModelRequest> log_;
};

}  // namespace montage
