#pragma once

// HTTP front for annotation sessions, consumed by the annotator UI.
//
//   POST /sessions                  {demographic, initial_subreddit} -> {session_id}
//   GET  /sessions/{id}/slate       open slate (advances when the open slate is
//                                   fully decided, or when ?advance=true)
//   POST /sessions/{id}/decisions   {subreddit, decision}
//   GET  /sessions/{id}             full session state
//   POST /sessions/{id}/export      seed set artifact
//
// Each session's event log is appended to <state_dir>/<id>.jsonl as it
// grows; on construction every log found there is replayed.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "splits/corpus.hpp"
#include "splits/seedset.hpp"
#include "splits/similarity.hpp"

namespace splits {

struct SeedsetServiceOptions {
  std::size_t sample_posts = 5;
  SlateOptions slate;
  std::optional<std::filesystem::path> state_dir;
  std::optional<std::filesystem::path> export_dir;
  std::optional<std::string> shared_token;
  std::function<std::int64_t()> clock = [] {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
};

// Session bookkeeping without the HTTP layer. Decisions are serialized per
// session; distinct sessions proceed independently.
class SessionManager {
 public:
  SessionManager(const CorpusStore& store, const UserSetIndex& index, SeedsetServiceOptions options)
      : store_(store), index_(index), options_(std::move(options)) {
    if (options_.state_dir) recover();
  }

  std::string create(const std::string& demographic, const std::string& initial_subreddit) {
    auto session = start_session(demographic, initial_subreddit, index_, options_.clock());
    std::unique_lock lock(map_mutex_);
    const std::string id = make_id(next_id_++);
    auto entry = std::make_shared<Entry>();
    entry->session = std::move(session);
    persist(id, *entry);
    sessions_.emplace(id, entry);
    return id;
  }

  json slate(const std::string& id, bool force_advance) {
    auto entry = get(id);
    std::lock_guard lock(entry->mutex);
    auto& s = entry->session;
    if (!s.complete && (force_advance || !s.current_slate || s.undecided().empty())) {
      next_slate(s, index_, options_.clock(), options_.slate);
      persist(id, *entry);
    }
    return slate_payload(s);
  }

  json decide(const std::string& id, const std::string& subreddit, Decision decision) {
    auto entry = get(id);
    std::lock_guard lock(entry->mutex);
    record_decision(entry->session, subreddit, decision, options_.clock());
    persist(id, *entry);
    return json{{"ok", true},
                {"queue_length", entry->session.queue.size()},
                {"included_count", entry->session.included.size()},
                {"excluded_count", entry->session.excluded.size()}};
  }

  json state(const std::string& id) {
    auto entry = get(id);
    std::lock_guard lock(entry->mutex);
    json j = to_json(entry->session);
    j["session_id"] = id;
    return j;
  }

  SeedSetArtifact export_artifact(const std::string& id) {
    auto entry = get(id);
    std::lock_guard lock(entry->mutex);
    auto artifact = export_seed_set(entry->session, options_.clock());
    if (options_.export_dir) {
      write_file(*options_.export_dir / (slugify(artifact.demographic) + ".json"), to_json(artifact).dump(2) + "\n");
    }
    return artifact;
  }

  AnnotationSession snapshot(const std::string& id) {
    auto entry = get(id);
    std::lock_guard lock(entry->mutex);
    return entry->session;
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(map_mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
  }

  const SeedsetServiceOptions& options() const { return options_; }

 private:
  struct Entry {
    std::mutex mutex;
    AnnotationSession session;
    std::size_t persisted = 0;
  };

  static std::string make_id(std::size_t n) {
    std::ostringstream out;
    out << "s" << std::setw(4) << std::setfill('0') << n;
    return out.str();
  }

  std::shared_ptr<Entry> get(const std::string& id) {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::not_found, "unknown session " + id);
    return it->second;
  }

  void persist(const std::string& id, Entry& entry) {
    if (!options_.state_dir) return;
    const auto& log = entry.session.event_log;
    if (entry.persisted == log.size()) return;
    std::filesystem::create_directories(*options_.state_dir);
    std::ofstream out(*options_.state_dir / (id + ".jsonl"), std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot append session log for " + id);
    for (std::size_t i = entry.persisted; i < log.size(); ++i) out << to_json(log[i]).dump() << '\n';
    out.flush();
    entry.persisted = log.size();
  }

  void recover() {
    if (!std::filesystem::exists(*options_.state_dir)) return;
    for (const auto& file : std::filesystem::directory_iterator(*options_.state_dir)) {
      if (file.path().extension() != ".jsonl") continue;
      const std::string id = file.path().stem().string();
      auto entry = std::make_shared<Entry>();
      entry->session = replay(parse_event_log(read_file(file.path())), index_, options_.slate);
      entry->persisted = entry->session.event_log.size();
      sessions_.emplace(id, entry);
      if (id.size() > 1 && id[0] == 's') {
        try {
          next_id_ = std::max<std::size_t>(next_id_, std::stoull(id.substr(1)) + 1);
        } catch (const std::exception&) {
        }
      }
    }
  }

  json candidate_payload(const Neighbor& n) const {
    const auto& positions = store_.posts_in_subreddit(n.subreddit);
    json samples = json::array();
    for (std::size_t i = 0; i < positions.size() && i < options_.sample_posts; ++i) {
      const Post& p = store_.at(positions[i]);
      samples.push_back({{"post_id", p.post_id}, {"text", p.text}});
    }
    std::size_t users = 0;
    if (index_.contains(n.subreddit)) users = index_.members(index_.id_of(n.subreddit)).size();
    return json{{"subreddit", n.subreddit},
                {"score", n.score},
                {"posts", positions.size()},
                {"users", users},
                {"samples", samples}};
  }

  json slate_payload(const AnnotationSession& s) const {
    json j;
    j["complete"] = s.complete;
    j["queue_length"] = s.queue.size();
    j["included_count"] = s.included.size();
    j["excluded_count"] = s.excluded.size();
    j["decided"] = std::vector<std::string>(s.decided_in_slate.begin(), s.decided_in_slate.end());
    if (s.complete) {
      j["seed_set"] = s.included;
      return j;
    }
    const auto& slate = *s.current_slate;
    j["source"] = slate.source;
    j["jaccard_top"] = json::array();
    j["cosine_top"] = json::array();
    for (const auto& n : slate.jaccard_top) j["jaccard_top"].push_back(candidate_payload(n));
    for (const auto& n : slate.cosine_top) j["cosine_top"].push_back(candidate_payload(n));
    return j;
  }

  const CorpusStore& store_;
  const UserSetIndex& index_;
  SeedsetServiceOptions options_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::size_t next_id_ = 1;
};

inline int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return 404;
    case ErrorKind::invalid_state: return 409;
    case ErrorKind::invalid_argument:
    case ErrorKind::parse: return 400;
    default: return 500;
  }
}

class SeedsetService {
 public:
  SeedsetService(const CorpusStore& store, const UserSetIndex& index, SeedsetServiceOptions options = {})
      : manager_(store, index, std::move(options)) {
    routes();
  }

  SessionManager& manager() { return manager_; }
  httplib::Server& server() { return server_; }

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port) {
    if (port == 0) return server_.bind_to_any_port(host);
    if (!server_.bind_to_port(host, port)) throw Error(ErrorKind::io, "cannot bind " + host);
    return port;
  }

  bool listen() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      const auto& token = manager_.options().shared_token;
      if (token && req.get_header_value("Authorization") != "Bearer " + *token) {
        reply(res, 401, {{"error", "unauthorized"}});
        return;
      }
      try {
        fn(req, res);
      } catch (const Error& e) {
        reply(res, http_status_for(e.kind()), {{"error", e.what()}, {"kind", to_string(e.kind())}});
      } catch (const json::exception& e) {
        reply(res, 400, {{"error", e.what()}, {"kind", "invalid-argument"}});
      }
    };
  }

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void routes() {
    server_.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = json::parse(req.body);
                   const auto id = manager_.create(body.at("demographic").get<std::string>(),
                                                   body.at("initial_subreddit").get<std::string>());
                   reply(res, 201, {{"session_id", id}});
                 }));
    server_.Get(R"(/sessions/([^/]+)/slate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const bool advance = req.has_param("advance") && req.get_param_value("advance") == "true";
                  reply(res, 200, manager_.slate(req.matches[1], advance));
                }));
    server_.Post(R"(/sessions/([^/]+)/decisions)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = json::parse(req.body);
                   reply(res, 200,
                         manager_.decide(req.matches[1], body.at("subreddit").get<std::string>(),
                                         parse_decision(body.at("decision").get<std::string>())));
                 }));
    server_.Post(R"(/sessions/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, to_json(manager_.export_artifact(req.matches[1])));
                 }));
    server_.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, 200, manager_.state(req.matches[1]));
                }));
  }

  SessionManager manager_;
  httplib::Server server_;
};

}  // namespace splits
