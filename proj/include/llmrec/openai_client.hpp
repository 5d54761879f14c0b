#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"

namespace llmrec {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};

  std::chrono::milliseconds backoff(int attempt) const {
    double ms = static_cast<double>(initial_backoff.count());
    for (int i = 1; i < attempt; ++i) ms *= multiplier;
    return std::chrono::milliseconds(static_cast<long long>(std::min(ms, static_cast<double>(max_backoff.count()))));
  }
};

struct EndpointConfig {
  std::string base_url = "http://localhost:5001";
  std::string model = "phi-4";
  LlmMode mode = LlmMode::Development;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{120};
  RetryPolicy retry;
};

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

/// Request body for POST {base_url}/v1/chat/completions.
inline nlohmann::json chat_completion_body(const std::string& model, const ChatRequest& request) {
  nlohmann::json body{{"model", model},
                      {"messages",
                       nlohmann::json::array({{{"role", "system"}, {"content", request.system}},
                                              {{"role", "user"}, {"content", request.user}}})},
                      {"temperature", request.params.temperature},
                      {"max_tokens", request.params.max_tokens}};
  if (!request.params.stop.empty()) body["stop"] = request.params.stop;
  return body;
}

/// Content of the first choice's message.
inline std::string first_choice_content(const std::string& response_body) {
  try {
    const auto j = nlohmann::json::parse(response_body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TransportError, "llm_gateway", std::string("unexpected completion payload: ") + e.what());
  }
}

/// Client for any OpenAI-compatible chat completion endpoint: a local server
/// in development mode, a hosted API in production mode.
class OpenAiClient : public LlmClient {
 public:
  using LlmClient::complete;

  explicit OpenAiClient(EndpointConfig config) : config_(std::move(config)) {
    split_base_url();
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) api_key_ = key;
    if (config_.mode == LlmMode::Production && api_key_.empty()) {
      throw Error(Errc::ConfigError, "llm_gateway",
                  "production mode needs an API key in $" + config_.api_key_env);
    }
  }

  std::string complete(const ChatRequest& request) override {
    request.params.validate();
    const std::string body = chat_completion_body(config_.model, request).dump();
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
      httplib::Client client(origin_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      auto result = client.Post(path_prefix_ + "/v1/chat/completions", headers, body, "application/json");
      if (result && result->status == 200) return first_choice_content(result->body);
      if (result) {
        last_error = "HTTP " + std::to_string(result->status);
        if (!retryable_status(result->status)) break;
      } else {
        last_error = httplib::to_string(result.error());
      }
      if (attempt < config_.retry.max_attempts) std::this_thread::sleep_for(config_.retry.backoff(attempt));
    }
    throw Error(Errc::TransportError, "llm_gateway",
                "chat completion to " + config_.base_url + " failed: " + last_error);
  }

  LlmMode mode() const override { return config_.mode; }
  const EndpointConfig& config() const { return config_; }

 private:
  // "http://host:port/prefix" -> origin "http://host:port", prefix "/prefix".
  void split_base_url() {
    std::string url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    if (url.ends_with("/v1")) url.resize(url.size() - 3);
    const auto scheme = url.find("://");
    const auto path = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    origin_ = path == std::string::npos ? url : url.substr(0, path);
    path_prefix_ = path == std::string::npos ? "" : url.substr(path);
  }

  EndpointConfig config_;
  std::string origin_;
  std::string path_prefix_;
  std::string api_key_;
};

}  // namespace llmrec
