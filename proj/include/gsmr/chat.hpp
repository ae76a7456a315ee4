#pragma once

// Chat-completions client. Every model, target or judge, is reached through
// the same request shape; test doubles implement ChatModel directly.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gsmr {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  double top_p = 1.0;
  int max_tokens = 2048;
  std::optional<std::uint64_t> seed;
};

struct ChatResponse {
  std::string content;
  std::optional<std::uint64_t> completion_tokens;
  std::uint64_t latency_ms = 0;
  int attempts = 1;
};

// 401/403: retrying cannot help.
struct AuthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Connection-level failure persisting through all retries. The stage aborts
// and can be resumed later.
struct EndpointUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A single request that could not be completed (exhausted 429/5xx, other 4xx,
// malformed body). Recorded as a failed record; the batch continues.
struct RequestFailed : std::runtime_error {
  int attempts = 1;
  RequestFailed(const std::string& what, int attempts_) : std::runtime_error(what), attempts(attempts_) {}
};

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string model_name() const = 0;
  // Identifies the endpoint in records and manifests; never includes secrets.
  virtual std::string fingerprint() const = 0;
};

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  std::string api_key_env;  // name of the variable, never the key
  double request_timeout = 120.0;
  int max_retries = 5;

  void check() const {
    if (base_url.empty()) throw std::invalid_argument("endpoint base_url is empty");
    if (model_name.empty()) throw std::invalid_argument("endpoint model_name is empty");
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (!(request_timeout > 0)) throw std::invalid_argument("request_timeout must be positive");
  }
};

inline nlohmann::json to_json(const ChatRequest& r) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : r.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  nlohmann::json body{{"model", r.model},         {"messages", messages},      {"temperature", r.temperature},
                      {"top_p", r.top_p},          {"max_tokens", r.max_tokens}};
  if (r.seed) body["seed"] = *r.seed;
  return body;
}

// choices[0].message.content and usage.completion_tokens.
inline ChatResponse parse_chat_body(const std::string& body) {
  auto j = nlohmann::json::parse(body);
  const auto& msg = j.at("choices").at(0).at("message");
  ChatResponse r;
  if (msg.contains("content") && msg["content"].is_string()) r.content = msg["content"].get<std::string>();
  else if (!msg.contains("content") || !msg["content"].is_null()) throw std::runtime_error("message.content missing");
  if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("completion_tokens") &&
      j["usage"]["completion_tokens"].is_number_unsigned())
    r.completion_tokens = j["usage"]["completion_tokens"].get<std::uint64_t>();
  return r;
}

struct BackoffPolicy {
  std::chrono::milliseconds base{500};
  std::chrono::milliseconds cap{30000};
};

class HttpChatModel final : public ChatModel {
 public:
  explicit HttpChatModel(ModelEndpoint endpoint, BackoffPolicy backoff = {})
      : endpoint_(std::move(endpoint)), backoff_(backoff), jitter_(std::random_device{}()) {
    endpoint_.check();
    std::string url = endpoint_.base_url;
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
    auto path_at = url.find('/', scheme + 3);
    origin_ = url.substr(0, path_at);
    path_ = path_at == std::string::npos ? "" : url.substr(path_at);
    while (!path_.empty() && path_.back() == '/') path_.pop_back();
    path_ += "/chat/completions";
  }

  std::string model_name() const override { return endpoint_.model_name; }
  std::string fingerprint() const override { return endpoint_.model_name + "@" + endpoint_.base_url; }
  const ModelEndpoint& endpoint() const { return endpoint_; }

  ChatResponse complete(const ChatRequest& request) override {
    httplib::Headers headers;
    if (!endpoint_.api_key_env.empty()) {
      const char* key = std::getenv(endpoint_.api_key_env.c_str());
      if (!key || !*key) throw AuthError("environment variable " + endpoint_.api_key_env + " is not set");
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const std::string body = to_json(request).dump();
    httplib::Client client(origin_);
    auto timeout = std::chrono::duration<double>(endpoint_.request_timeout);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

    auto start = std::chrono::steady_clock::now();
    std::string last_error;
    bool connection_failure = false;
    const int attempts = endpoint_.max_retries + 1;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      std::optional<std::chrono::milliseconds> hinted;
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        connection_failure = true;
        last_error = "connection: " + httplib::to_string(res.error());
      } else if (res->status == 200) {
        try {
          ChatResponse out = parse_chat_body(res->body);
          out.attempts = attempt;
          out.latency_ms = static_cast<std::uint64_t>(
              std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
          return out;
        } catch (const std::exception& e) {
          connection_failure = false;
          last_error = std::string("malformed response body: ") + e.what();
        }
      } else if (res->status == 401 || res->status == 403) {
        throw AuthError("HTTP " + std::to_string(res->status) + " from " + fingerprint());
      } else if (res->status == 429 || res->status == 408 || res->status >= 500) {
        connection_failure = false;
        last_error = "HTTP " + std::to_string(res->status);
        hinted = retry_after(*res);
      } else {
        throw RequestFailed("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300), attempt);
      }
      if (attempt < attempts) std::this_thread::sleep_for(hinted ? *hinted : delay_for(attempt));
    }
    if (connection_failure) throw EndpointUnavailable(fingerprint() + ": " + last_error);
    throw RequestFailed(last_error, attempts);
  }

 private:
  static std::optional<std::chrono::milliseconds> retry_after(const httplib::Response& res) {
    if (!res.has_header("Retry-After")) return std::nullopt;
    try {
      double seconds = std::stod(res.get_header_value("Retry-After"));
      if (seconds < 0) return std::nullopt;
      return std::chrono::milliseconds(static_cast<long long>(std::min(seconds, 120.0) * 1000));
    } catch (const std::exception&) {
      return std::nullopt;  // HTTP-date form: fall back to our own backoff
    }
  }

  std::chrono::milliseconds delay_for(int attempt) {
    auto full = backoff_.base * (1LL << std::min(attempt - 1, 20));
    if (full > backoff_.cap) full = backoff_.cap;
    std::lock_guard lock(jitter_mutex_);
    std::uniform_real_distribution<double> half_to_full(0.5, 1.0);
    return std::chrono::milliseconds(static_cast<long long>(full.count() * half_to_full(jitter_)));
  }

  ModelEndpoint endpoint_;
  BackoffPolicy backoff_;
  std::string origin_;
  std::string path_;
  std::mutex jitter_mutex_;
  std::mt19937_64 jitter_;
};

}  // namespace gsmr
