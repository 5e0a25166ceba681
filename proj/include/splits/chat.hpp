#pragma once

// Chat-completion clients. Every call runs at temperature 0. Decorators add
// bounded retry with backoff and a response cache keyed by
// (model_name, prompt hash) backed by an append-only transcript file.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "splits/common.hpp"

namespace splits {

using json = nlohmann::json;

class ChatModelClient {
 public:
  virtual ~ChatModelClient() = default;

  virtual std::string model_name() const = 0;

  // Single user-turn completion. Throws Error(transport) on failure.
  virtual std::string complete(const std::string& prompt) = 0;

  static constexpr double temperature = 0.0;
};

struct ChatEndpointConfig {
  std::string model_name;
  // Full URL of an OpenAI-style chat-completions route, e.g.
  // http://localhost:8000/v1/chat/completions
  std::string endpoint;
  // Name of the environment variable holding the bearer token, if any.
  std::string api_key_env;
  int max_retries = 3;
  double timeout_seconds = 120.0;
  double backoff_seconds = 1.0;
  // 0 disables rate limiting.
  double requests_per_second = 0.0;
};

inline ChatEndpointConfig endpoint_config_from_json(const json& j) {
  ChatEndpointConfig c;
  c.model_name = j.at("model_name");
  c.endpoint = j.at("endpoint");
  c.api_key_env = j.value("api_key_env", std::string{});
  c.max_retries = j.value("max_retries", 3);
  c.timeout_seconds = j.value("timeout_seconds", 120.0);
  c.backoff_seconds = j.value("backoff_seconds", 1.0);
  c.requests_per_second = j.value("requests_per_second", 0.0);
  return c;
}

inline json chat_request_body(const std::string& model, const std::string& prompt) {
  return json{{"model", model},
              {"temperature", ChatModelClient::temperature},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}};
}

inline std::string chat_response_content(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(ErrorKind::transport, "response has no choices");
  }
  const auto& choice = body["choices"][0];
  if (choice.contains("message") && choice["message"].contains("content") &&
      choice["message"]["content"].is_string()) {
    return choice["message"]["content"];
  }
  if (choice.contains("text") && choice["text"].is_string()) return choice["text"];
  throw Error(ErrorKind::transport, "response choice has no content");
}

class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}

  void acquire() {
    if (per_second_ <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / per_second_));
    std::unique_lock lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    const auto slot = std::max(now, next_);
    next_ = slot + interval;
    lock.unlock();
    std::this_thread::sleep_until(slot);
  }

 private:
  double per_second_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

class HttpChatClient final : public ChatModelClient {
 public:
  explicit HttpChatClient(ChatEndpointConfig config) : config_(std::move(config)), limiter_(config_.requests_per_second) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorKind::invalid_argument, "endpoint must be an absolute URL: " + config_.endpoint);
    }
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    base_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
    if (!config_.api_key_env.empty()) {
      if (const char* token = std::getenv(config_.api_key_env.c_str())) token_ = token;
    }
  }

  std::string model_name() const override { return config_.model_name; }

  std::string complete(const std::string& prompt) override {
    limiter_.acquire();
    httplib::Client client(base_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout_seconds));
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_connection_timeout(std::chrono::seconds(10));
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = client.Post(path_, headers, chat_request_body(config_.model_name, prompt).dump(), "application/json");
    if (!res) throw Error(ErrorKind::transport, "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(ErrorKind::transport, "HTTP " + std::to_string(res->status) + " from " + config_.endpoint);
    }
    json body = json::parse(res->body, nullptr, false);
    if (body.is_discarded()) throw Error(ErrorKind::transport, "non-JSON response from " + config_.endpoint);
    return chat_response_content(body);
  }

  const ChatEndpointConfig& config() const { return config_; }

 private:
  ChatEndpointConfig config_;
  RateLimiter limiter_;
  std::string base_;
  std::string path_;
  std::string token_;
};

struct RetryPolicy {
  int max_retries = 3;
  double backoff_seconds = 1.0;
};

// Retries transport failures with exponential backoff, then rethrows.
class RetryingClient final : public ChatModelClient {
 public:
  RetryingClient(std::shared_ptr<ChatModelClient> inner, RetryPolicy policy)
      : inner_(std::move(inner)), policy_(policy) {}

  std::string model_name() const override { return inner_->model_name(); }

  std::string complete(const std::string& prompt) override {
    double delay = policy_.backoff_seconds;
    for (int attempt = 0;; ++attempt) {
      try {
        return inner_->complete(prompt);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::transport || attempt >= policy_.max_retries) throw;
      }
      if (delay > 0) std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      delay *= 2.0;
    }
  }

 private:
  std::shared_ptr<ChatModelClient> inner_;
  RetryPolicy policy_;
};

// Thread-safe (model_name, prompt hash) -> response store. With a path,
// entries are loaded at construction and appended as they arrive.
class TranscriptStore {
 public:
  TranscriptStore() = default;

  explicit TranscriptStore(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(*path_)) {
      for (const auto& line : split_lines(read_file(*path_))) {
        if (trim(line).empty()) continue;
        const auto j = json::parse(line);
        entries_[key(j.at("model").get<std::string>(), j.at("prompt_sha256").get<std::string>())] = j.at("response");
      }
    }
  }

  static std::string key(const std::string& model, const std::string& prompt_hash) { return model + "\n" + prompt_hash; }

  std::optional<std::string> lookup(const std::string& model, const std::string& prompt) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key(model, sha256_hex(prompt)));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& model, const std::string& prompt, const std::string& response) {
    const auto hash = sha256_hex(prompt);
    std::lock_guard lock(mutex_);
    if (!entries_.emplace(key(model, hash), response).second) return;
    if (path_) {
      if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
      std::ofstream out(*path_, std::ios::app | std::ios::binary);
      out << json{{"model", model}, {"prompt_sha256", hash}, {"response", response}}.dump() << '\n';
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
};

class CachingClient final : public ChatModelClient {
 public:
  CachingClient(std::shared_ptr<ChatModelClient> inner, std::shared_ptr<TranscriptStore> store)
      : inner_(std::move(inner)), store_(std::move(store)) {}

  std::string model_name() const override { return inner_->model_name(); }

  std::string complete(const std::string& prompt) override {
    const auto model = inner_->model_name();
    if (auto hit = store_->lookup(model, prompt)) {
      ++hits_;
      return *hit;
    }
    auto response = inner_->complete(prompt);
    store_->insert(model, prompt, response);
    ++misses_;
    return response;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<ChatModelClient> inner_;
  std::shared_ptr<TranscriptStore> store_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// HTTP client wrapped in retry and then cache.
inline std::shared_ptr<ChatModelClient> make_endpoint_client(const ChatEndpointConfig& config,
                                                             std::shared_ptr<TranscriptStore> cache) {
  std::shared_ptr<ChatModelClient> client = std::make_shared<HttpChatClient>(config);
  client = std::make_shared<RetryingClient>(client, RetryPolicy{config.max_retries, config.backoff_seconds});
  if (cache) client = std::make_shared<CachingClient>(client, std::move(cache));
  return client;
}

}  // namespace splits
