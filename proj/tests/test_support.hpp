#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <httplib.h>

#include "splits/chat.hpp"
#include "splits/common.hpp"
#include "splits/corpus.hpp"
#include "splits/prompts.hpp"
#include "splits/sampler.hpp"

namespace splits::testing {

inline std::filesystem::path source_dir() { return SPLITS_SOURCE_DIR; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("splits_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Post post(std::string id, std::string author, std::string sub, std::string text = "hello", std::int64_t t = 1) {
  return {std::move(id), std::move(author), std::move(sub), t, std::move(text)};
}

// Chat client backed by a plain function.
class FunctionClient final : public ChatModelClient {
 public:
  FunctionClient(std::string name, std::function<std::string(const std::string&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}

  std::string model_name() const override { return name_; }
  std::string complete(const std::string& prompt) override {
    ++calls_;
    return fn_(prompt);
  }
  std::size_t calls() const { return calls_; }

 private:
  std::string name_;
  std::function<std::string(const std::string&)> fn_;
  std::atomic<std::size_t> calls_{0};
};

inline std::string section(const std::string& prompt, const std::string& header) {
  const auto start = prompt.find("### " + header + "\n");
  if (start == std::string::npos) return {};
  const auto body = start + header.size() + 5;
  const auto end = prompt.find("\n### ", body);
  return prompt.substr(body, end == std::string::npos ? std::string::npos : end - body);
}

// Theory model that names the marker whenever it appears in at least
// `min_hits` calibration posts, and a content-free theory otherwise.
inline std::string marker_theory_response(const std::string& prompt, const std::string& marker, std::size_t min_hits = 1) {
  const auto examples = section(prompt, "Example Posts");
  std::size_t hits = 0;
  for (const auto& line : split_lines(examples)) {
    if (line.find(marker) != std::string::npos) ++hits;
  }
  if (hits >= min_hits) {
    return "Group A: uses the word \"" + marker + "\"; Group B: never uses that word\n"
           "Group A: short sentences; Group B: short sentences\n"
           "Group A: neutral tone; Group B: neutral tone";
  }
  return "Group A: neutral tone; Group B: neutral tone\n"
         "Group A: short sentences; Group B: short sentences\n"
         "Group A: plain words; Group B: plain words";
}

// Classification model that follows a theory's quoted-marker rule. If the
// guidelines name no marker, it answers set 1 = A.
inline std::string rule_following_response(const std::string& prompt) {
  const auto guidelines = section(prompt, "Guidelines");
  static const std::regex kQuoted("Group A: uses the word \"([^\"]+)\"");
  std::smatch m;
  bool set1_is_a = true;
  if (std::regex_search(guidelines, m, kQuoted)) {
    const std::string marker = m[1];
    const bool in1 = section(prompt, "Post Set 1").find(marker) != std::string::npos;
    const bool in2 = section(prompt, "Post Set 2").find(marker) != std::string::npos;
    if (in2 && !in1) set1_is_a = false;
  }
  return std::string("1. Explanation: following the guidelines.\n") + "2. Post Set 1: " + (set1_is_a ? "A" : "B") +
         "\n3. Post Set 2: " + (set1_is_a ? "B" : "A");
}

// Coin flip derived from the prompt and a seed, so answers do not depend
// on call order.
inline std::string coin_flip_response(const std::string& prompt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, prompt));
  const bool a = fair_coin(rng);
  return std::string("Post Set 1: ") + (a ? "A" : "B") + "\nPost Set 2: " + (a ? "B" : "A");
}

// Each group contributes `per_group` posts; group A posts carry `marker`
// when `signal` is set.
inline std::vector<InstancePost> planted_pool(const std::string& prefix, std::size_t per_group, const std::string& marker,
                                              bool signal, std::uint64_t seed) {
  static const std::vector<std::string> kWords = {"garden", "soil", "weather", "seeds", "water", "sun", "tools", "rain"};
  Rng rng(seed);
  std::vector<InstancePost> pool;
  for (std::size_t i = 0; i < per_group; ++i) {
    std::string text = "post about the " + kWords[uniform_below(rng, kWords.size())] + " and the " +
                       kWords[uniform_below(rng, kWords.size())];
    if (signal) text += " " + marker;
    pool.push_back({prefix + std::to_string(i), text, Side::a});
  }
  return pool;
}

// An OpenAI-style chat-completions server on a free local port.
class StubChatServer {
 public:
  using Handler = std::function<std::string(const std::string& model, const std::string& prompt)>;

  explicit StubChatServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      {
        std::lock_guard lock(mutex_);
        last_authorization_ = req.get_header_value("Authorization");
        last_body_ = req.body;
      }
      if (failures_remaining_ > 0) {
        --failures_remaining_;
        res.status = 503;
        res.set_content("{\"error\":\"busy\"}", "application/json");
        return;
      }
      const auto body = json::parse(req.body);
      const std::string model = body.at("model");
      const std::string prompt = body.at("messages").at(0).at("content");
      const json reply = {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", handler_(model, prompt)}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubChatServer() {
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  std::size_t requests() const { return requests_; }
  void fail_next(int n) { failures_remaining_ = n; }
  std::string last_authorization() const {
    std::lock_guard lock(mutex_);
    return last_authorization_;
  }
  std::string last_body() const {
    std::lock_guard lock(mutex_);
    return last_body_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::atomic<int> failures_remaining_{0};
  mutable std::mutex mutex_;
  std::string last_authorization_;
  std::string last_body_;
};

// Random incidence: up to `max_subs` subreddits and `max_users` users.
inline CorpusStore random_store(Rng& rng, std::size_t max_subs, std::size_t max_users, double density) {
  const std::size_t subs = 1 + uniform_below(rng, max_subs);
  const std::size_t users = 1 + uniform_below(rng, max_users);
  std::vector<Post> posts;
  std::size_t id = 0;
  const auto threshold = static_cast<std::uint64_t>(density * 1e6);
  for (std::size_t s = 0; s < subs; ++s) {
    for (std::size_t u = 0; u < users; ++u) {
      if (uniform_below(rng, 1000000) >= threshold) continue;
      const std::size_t copies = 1 + uniform_below(rng, 3);
      for (std::size_t c = 0; c < copies; ++c) {
        posts.push_back(post("p" + std::to_string(id++), "u" + std::to_string(u), "s" + std::to_string(s)));
      }
    }
  }
  return CorpusStore(std::move(posts));
}

}  // namespace splits::testing
