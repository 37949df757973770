#pragma once

#include <map>
#include <string>

#include "montage/provider.hpp"

namespace montage {

// OpenAI-compatible chat-completions backend.
//
// Environment:
//   MONTAGE_API_BASE          base URL, default https://api.openai.com/v1
//   MONTAGE_API_KEY           bearer token (required)
//   MONTAGE_MODEL             default model name (required)
//   MONTAGE_MODEL_<TASK>      per-task model, e.g. MONTAGE_MODEL_SHOT_PLAN
//   MONTAGE_HTTP_TIMEOUT      request timeout in seconds, default 120
struct HttpConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model;
  std::map<Task, std::string> task_models;
  double timeout_seconds = 120.0;

  static HttpConfig from_env();
};

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);

  std::string id() const override { return "http:" + config_.base_url; }
  std::string send(const ModelRequest& request) override;

  /// The JSON body posted for `request` (exposed for wire-format tests).
  Json request_body(const ModelRequest& request) const;

 private:
  HttpConfig config_;
};

}  // namespace montage
