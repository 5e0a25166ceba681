#pragma once

// Seed-set annotation loop: a FIFO queue of included subreddits, each
// explored by presenting its top Jaccard and top cosine neighbours.
// Sessions are append-only event logs; state is a fold over the log.

#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/common.hpp"
#include "splits/similarity.hpp"

namespace splits {

enum class Decision { include, exclude };

inline const char* to_string(Decision d) { return d == Decision::include ? "include" : "exclude"; }

inline Decision parse_decision(std::string_view s) {
  if (s == "include") return Decision::include;
  if (s == "exclude") return Decision::exclude;
  throw Error(ErrorKind::invalid_argument, "decision must be include or exclude");
}

struct SessionEvent {
  enum class Type { start, advance, decision };
  Type type = Type::start;
  std::int64_t timestamp = 0;
  std::string demographic;                 // start
  std::string subreddit;                   // start: initial; advance: popped (empty = complete); decision
  std::optional<Decision> decision;        // decision

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

struct CandidateSlate {
  std::string source;
  std::vector<Neighbor> jaccard_top;
  std::vector<Neighbor> cosine_top;

  friend bool operator==(const CandidateSlate&, const CandidateSlate&) = default;

  std::set<std::string> candidates() const {
    std::set<std::string> out;
    for (const auto& n : jaccard_top) out.insert(n.subreddit);
    for (const auto& n : cosine_top) out.insert(n.subreddit);
    return out;
  }
};

struct SessionComplete {
  std::vector<std::string> seed_set;
};

struct SlateOptions {
  std::size_t per_measure = 20;
  OverlapOptions overlap;
};

struct AnnotationSession {
  std::string demographic;
  std::deque<std::string> queue;
  std::vector<std::string> included;  // insertion order
  std::set<std::string> excluded;
  std::set<std::string> shown;
  std::optional<std::string> current;
  std::optional<CandidateSlate> current_slate;
  std::set<std::string> decided_in_slate;
  bool complete = false;
  std::vector<SessionEvent> event_log;

  friend bool operator==(const AnnotationSession&, const AnnotationSession&) = default;

  bool is_included(const std::string& s) const {
    return std::find(included.begin(), included.end(), s) != included.end();
  }

  // Candidates of the open slate still awaiting a decision.
  std::set<std::string> undecided() const {
    std::set<std::string> out;
    if (!current_slate) return out;
    for (const auto& c : current_slate->candidates()) {
      if (!decided_in_slate.count(c)) out.insert(c);
    }
    return out;
  }
};

inline AnnotationSession start_session(const std::string& demographic, const std::string& initial_subreddit,
                                       const UserSetIndex& index, std::int64_t now = 0) {
  if (!index.contains(initial_subreddit)) {
    throw Error(ErrorKind::not_found, "unknown subreddit " + initial_subreddit);
  }
  AnnotationSession s;
  s.demographic = demographic;
  s.included.push_back(initial_subreddit);
  s.queue.push_back(initial_subreddit);
  s.event_log.push_back({SessionEvent::Type::start, now, demographic, initial_subreddit, std::nullopt});
  return s;
}

inline CandidateSlate build_slate(const AnnotationSession& session, const std::string& source,
                                  const UserSetIndex& index, const SlateOptions& options) {
  std::set<std::string> blocked = session.excluded;
  blocked.insert(session.included.begin(), session.included.end());
  CandidateSlate slate;
  slate.source = source;
  slate.jaccard_top =
      top_neighbors(index, source, options.per_measure, Measure::jaccard, blocked, options.overlap);
  slate.cosine_top = top_neighbors(index, source, options.per_measure, Measure::cosine, blocked, options.overlap);
  return slate;
}

using SlateOrComplete = std::variant<CandidateSlate, SessionComplete>;

// Pops the next queued subreddit and presents its neighbours. Undecided
// candidates of the previous slate are dropped for this round only.
inline SlateOrComplete next_slate(AnnotationSession& session, const UserSetIndex& index, std::int64_t now = 0,
                                  const SlateOptions& options = {}) {
  session.current_slate.reset();
  session.decided_in_slate.clear();
  if (session.queue.empty()) {
    if (!session.complete) {
      session.complete = true;
      session.current.reset();
      session.event_log.push_back({SessionEvent::Type::advance, now, {}, {}, std::nullopt});
    }
    return SessionComplete{session.included};
  }
  const std::string source = session.queue.front();
  session.queue.pop_front();
  session.current = source;
  auto slate = build_slate(session, source, index, options);
  for (const auto& c : slate.candidates()) session.shown.insert(c);
  session.current_slate = slate;
  session.event_log.push_back({SessionEvent::Type::advance, now, {}, source, std::nullopt});
  return slate;
}

inline void record_decision(AnnotationSession& session, const std::string& subreddit, Decision decision,
                            std::int64_t now = 0) {
  if (!session.current_slate || !session.current_slate->candidates().count(subreddit)) {
    throw Error(ErrorKind::invalid_state, subreddit + " is not in the current slate");
  }
  if (session.decided_in_slate.count(subreddit)) {
    throw Error(ErrorKind::invalid_state, subreddit + " was already decided");
  }
  session.decided_in_slate.insert(subreddit);
  if (decision == Decision::include) {
    session.included.push_back(subreddit);
    session.queue.push_back(subreddit);
  } else {
    session.excluded.insert(subreddit);
  }
  session.event_log.push_back({SessionEvent::Type::decision, now, {}, subreddit, decision});
}

// ---------------------------------------------------------------------------
// Event log serialization and replay

inline json to_json(const SessionEvent& e) {
  json j;
  switch (e.type) {
    case SessionEvent::Type::start:
      j = {{"type", "start"}, {"demographic", e.demographic}, {"subreddit", e.subreddit}};
      break;
    case SessionEvent::Type::advance:
      j = {{"type", "advance"}, {"subreddit", e.subreddit.empty() ? json(nullptr) : json(e.subreddit)}};
      break;
    case SessionEvent::Type::decision:
      j = {{"type", "decision"}, {"subreddit", e.subreddit}, {"decision", to_string(*e.decision)}};
      break;
  }
  j["ts"] = e.timestamp;
  return j;
}

inline SessionEvent event_from_json(const json& j) {
  SessionEvent e;
  const std::string type = j.at("type");
  e.timestamp = j.at("ts").get<std::int64_t>();
  if (type == "start") {
    e.type = SessionEvent::Type::start;
    e.demographic = j.at("demographic");
    e.subreddit = j.at("subreddit");
  } else if (type == "advance") {
    e.type = SessionEvent::Type::advance;
    if (j.at("subreddit").is_string()) e.subreddit = j.at("subreddit");
  } else if (type == "decision") {
    e.type = SessionEvent::Type::decision;
    e.subreddit = j.at("subreddit");
    e.decision = parse_decision(j.at("decision").get<std::string>());
  } else {
    throw Error(ErrorKind::parse, "unknown session event " + type);
  }
  return e;
}

inline std::string serialize_event_log(const std::vector<SessionEvent>& log) {
  std::string out;
  for (const auto& e : log) out += to_json(e).dump() + "\n";
  return out;
}

inline std::vector<SessionEvent> parse_event_log(std::string_view text) {
  std::vector<SessionEvent> log;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    log.push_back(event_from_json(json::parse(line)));
  }
  return log;
}

inline std::string event_log_hash(const AnnotationSession& session) {
  return sha256_hex(serialize_event_log(session.event_log));
}

// Rebuilds a session from its log. Advances are re-executed against the
// index and must pop the recorded subreddit.
inline AnnotationSession replay(const std::vector<SessionEvent>& log, const UserSetIndex& index,
                                const SlateOptions& options = {}) {
  if (log.empty() || log.front().type != SessionEvent::Type::start) {
    throw Error(ErrorKind::parse, "event log must begin with a start event");
  }
  AnnotationSession s = start_session(log[0].demographic, log[0].subreddit, index, log[0].timestamp);
  for (std::size_t i = 1; i < log.size(); ++i) {
    const auto& e = log[i];
    switch (e.type) {
      case SessionEvent::Type::start:
        throw Error(ErrorKind::parse, "duplicate start event");
      case SessionEvent::Type::advance: {
        const std::string expected = s.queue.empty() ? std::string{} : s.queue.front();
        if (expected != e.subreddit) {
          throw Error(ErrorKind::consistency, "log advance does not match queue at event " + std::to_string(i));
        }
        next_slate(s, index, e.timestamp, options);
        break;
      }
      case SessionEvent::Type::decision:
        record_decision(s, e.subreddit, *e.decision, e.timestamp);
        break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Export

struct SeedSetArtifact {
  std::string demographic;
  std::vector<std::string> subreddits;
  std::int64_t created_at = 0;
  std::string log_hash;

  friend bool operator==(const SeedSetArtifact&, const SeedSetArtifact&) = default;
};

inline SeedSetArtifact export_seed_set(const AnnotationSession& session, std::int64_t now = 0) {
  if (!session.complete || !session.queue.empty()) {
    throw Error(ErrorKind::invalid_state, "session is not complete");
  }
  return {session.demographic, session.included, now, event_log_hash(session)};
}

inline json to_json(const SeedSetArtifact& a) {
  return json{{"demographic", a.demographic},
              {"subreddits", a.subreddits},
              {"created_at", a.created_at},
              {"log_hash", a.log_hash}};
}

inline SeedSetArtifact seed_set_from_json(const json& j) {
  SeedSetArtifact a;
  a.demographic = j.at("demographic");
  a.subreddits = j.at("subreddits").get<std::vector<std::string>>();
  a.created_at = j.value("created_at", std::int64_t{0});
  a.log_hash = j.value("log_hash", std::string{});
  return a;
}

inline SeedSetArtifact load_seed_set(const std::filesystem::path& path) {
  return seed_set_from_json(json::parse(read_file(path)));
}

inline json to_json(const Neighbor& n) { return json{{"subreddit", n.subreddit}, {"score", n.score}}; }

inline json to_json(const CandidateSlate& slate) {
  json j = {{"source", slate.source}, {"jaccard_top", json::array()}, {"cosine_top", json::array()}};
  for (const auto& n : slate.jaccard_top) j["jaccard_top"].push_back(to_json(n));
  for (const auto& n : slate.cosine_top) j["cosine_top"].push_back(to_json(n));
  return j;
}

inline json to_json(const AnnotationSession& s) {
  json j;
  j["demographic"] = s.demographic;
  j["queue"] = std::vector<std::string>(s.queue.begin(), s.queue.end());
  j["included"] = s.included;
  j["excluded"] = std::vector<std::string>(s.excluded.begin(), s.excluded.end());
  j["shown"] = std::vector<std::string>(s.shown.begin(), s.shown.end());
  j["current"] = s.current ? json(*s.current) : json(nullptr);
  j["current_slate"] = s.current_slate ? to_json(*s.current_slate) : json(nullptr);
  j["decided_in_slate"] = std::vector<std::string>(s.decided_in_slate.begin(), s.decided_in_slate.end());
  j["complete"] = s.complete;
  j["event_log"] = json::array();
  for (const auto& e : s.event_log) j["event_log"].push_back(to_json(e));
  return j;
}

}  // namespace splits
