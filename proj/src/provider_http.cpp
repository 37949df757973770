#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "montage/provider_http.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "montage/hash.hpp"

namespace montage {
namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PreconditionError("cannot read attachment " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string mime_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  return "image/jpeg";
}

// "https://host:port/v1" -> {"https://host:port", "/v1"}
std::pair<std::string, std::string> split_base(const std::string& url) {
  auto scheme_end = url.find("://");
  auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  auto path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

HttpConfig HttpConfig::from_env() {
  HttpConfig c;
  c.base_url = env_or("MONTAGE_API_BASE", c.base_url);
  c.api_key = env_or("MONTAGE_API_KEY", "");
  c.model = env_or("MONTAGE_MODEL", "");
  c.timeout_seconds = std::stod(env_or("MONTAGE_HTTP_TIMEOUT", "120"));
  for (int i = 0; i <= static_cast<int>(Task::trim_feedback); ++i) {
    auto task = static_cast<Task>(i);
    std::string var = "MONTAGE_MODEL_" + std::string(to_string(task));
    std::transform(var.begin(), var.end(), var.begin(), [](unsigned char ch) { return std::toupper(ch); });
    auto m = env_or(var.c_str(), "");
    if (!m.empty()) c.task_models[task] = m;
  }
  return c;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) throw CredentialError("MONTAGE_API_KEY is not set");
  if (config_.model.empty()) throw CredentialError("MONTAGE_MODEL is not set");
}

Json HttpBackend::request_body(const ModelRequest& request) const {
  Json content = Json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& a : request.attachments) {
    switch (a.kind) {
      case AttachmentKind::frames:
        for (const auto& f : a.files) {
          auto bytes = read_bytes(f);
          content.push_back({{"type", "image_url"},
                             {"image_url", {{"url", "data:" + mime_for(f) + ";base64," + base64_encode(bytes)}}}});
        }
        break;
      case AttachmentKind::audio_segment:
        for (const auto& f : a.files) {
          auto bytes = read_bytes(f);
          content.push_back(
              {{"type", "input_audio"}, {"input_audio", {{"data", base64_encode(bytes)}, {"format", "wav"}}}});
        }
        break;
      case AttachmentKind::text:
        if (!a.text.empty()) content.push_back({{"type", "text"}, {"text", a.text}});
        break;
    }
  }
  auto model = config_.model;
  if (auto it = config_.task_models.find(request.task); it != config_.task_models.end()) model = it->second;
  return {{"model", model},
          {"temperature", 0},
          {"response_format", {{"type", "json_object"}}},
          {"messages",
           {{{"role", "system"}, {"content", "You are a video editing assistant. Reply with one JSON object only."}},
            {{"role", "user"}, {"content", content}}}}};
}

std::string HttpBackend::send(const ModelRequest& request) {
  auto [host, prefix] = split_base(config_.base_url);
  httplib::Client client(host);
  auto secs = static_cast<time_t>(config_.timeout_seconds);
  client.set_read_timeout(secs, 0);
  client.set_write_timeout(secs, 0);
  client.set_connection_timeout(std::min<time_t>(secs, 30), 0);
  client.set_bearer_token_auth(config_.api_key);

  auto res = client.Post(prefix + "/chat/completions", request_body(request).dump(), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw CredentialError("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
  if (res->status == 429 || res->status >= 500)
    throw TransportError("provider returned HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body);

  auto body = Json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("choices") || body["choices"].empty())
    throw TransportError("malformed chat-completions envelope");
  const auto& msg = body["choices"][0]["message"];
  if (!msg.contains("content") || !msg["content"].is_string())
    throw TransportError("chat-completions reply without text content");
  return msg["content"].get<std::string>();
}

}  // namespace montage
