#pragma once

// Post store: line-delimited ingest, user-level filtering and the
// directory-based persisted form.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/common.hpp"

namespace splits {

using json = nlohmann::json;

struct Post {
  std::string post_id;
  std::string author_id;
  std::string subreddit_id;
  std::int64_t created_at = 0;
  std::string text;

  friend bool operator==(const Post&, const Post&) = default;
};

inline json to_json(const Post& p) {
  return json{{"post_id", p.post_id},
              {"author_id", p.author_id},
              {"subreddit_id", p.subreddit_id},
              {"created_at", p.created_at},
              {"text", p.text}};
}

// Parses one record. Returns nullopt for anything that violates the Post
// invariants rather than throwing; ingest counts those as rejected.
inline std::optional<Post> parse_post(std::string_view line) {
  if (trim(line).empty()) return std::nullopt;
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  auto str_field = [&](const char* key) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
  };
  auto id = str_field("post_id");
  auto author = str_field("author_id");
  auto sub = str_field("subreddit_id");
  auto text = str_field("text");
  if (!id || !author || !sub || !text) return std::nullopt;
  if (id->empty() || author->empty() || sub->empty() || trim(*text).empty()) return std::nullopt;

  auto ts = j.find("created_at");
  if (ts == j.end()) return std::nullopt;
  std::int64_t created = 0;
  if (ts->is_number_integer()) {
    created = ts->get<std::int64_t>();
  } else if (ts->is_number_float()) {
    const double d = ts->get<double>();
    if (d != std::floor(d)) return std::nullopt;
    created = static_cast<std::int64_t>(d);
  } else {
    return std::nullopt;
  }
  if (created <= 0) return std::nullopt;
  return Post{std::move(*id), std::move(*author), std::move(*sub), created, std::move(*text)};
}

// Which filters produced a store. Recorded in the store manifest.
struct StoreProvenance {
  std::optional<std::string> bot_list_hash;
  std::optional<double> chattiness_fraction;
  std::optional<std::size_t> min_subreddit_posts;
  std::optional<std::string> source_hash;

  friend bool operator==(const StoreProvenance&, const StoreProvenance&) = default;
};

// Immutable after construction; safe to share read-only across threads.
// Posts are kept sorted by post_id so equal content gives an equal store
// regardless of ingest order.
class CorpusStore {
 public:
  CorpusStore() = default;

  explicit CorpusStore(std::vector<Post> posts, StoreProvenance provenance = {})
      : posts_(std::move(posts)), provenance_(std::move(provenance)) {
    std::sort(posts_.begin(), posts_.end(),
              [](const Post& a, const Post& b) { return a.post_id < b.post_id; });
    for (std::size_t i = 0; i < posts_.size(); ++i) {
      const Post& p = posts_[i];
      if (!by_id_.emplace(p.post_id, i).second) {
        throw Error(ErrorKind::invalid_argument, "duplicate post_id " + p.post_id);
      }
      user_index_[p.author_id].push_back(i);
      subreddit_index_[p.subreddit_id].push_back(i);
    }
  }

  const std::vector<Post>& posts() const { return posts_; }
  std::size_t size() const { return posts_.size(); }
  bool empty() const { return posts_.empty(); }
  const StoreProvenance& provenance() const { return provenance_; }

  const Post* find(const std::string& post_id) const {
    auto it = by_id_.find(post_id);
    return it == by_id_.end() ? nullptr : &posts_[it->second];
  }

  const Post& at(std::size_t position) const { return posts_.at(position); }

  // Positions into posts(), ascending.
  const std::vector<std::size_t>& posts_by_author(const std::string& author) const {
    auto it = user_index_.find(author);
    return it == user_index_.end() ? empty_positions() : it->second;
  }

  const std::vector<std::size_t>& posts_in_subreddit(const std::string& subreddit) const {
    auto it = subreddit_index_.find(subreddit);
    return it == subreddit_index_.end() ? empty_positions() : it->second;
  }

  bool has_subreddit(const std::string& subreddit) const { return subreddit_index_.count(subreddit) != 0; }

  std::vector<std::string> authors() const { return sorted_keys(user_index_); }
  std::vector<std::string> subreddits() const { return sorted_keys(subreddit_index_); }
  std::size_t author_count() const { return user_index_.size(); }

  const std::unordered_map<std::string, std::vector<std::size_t>>& user_index() const { return user_index_; }
  const std::unordered_map<std::string, std::vector<std::size_t>>& subreddit_index() const {
    return subreddit_index_;
  }

  // Content equality; provenance is metadata and not compared.
  friend bool operator==(const CorpusStore& a, const CorpusStore& b) { return a.posts_ == b.posts_; }

 private:
  static const std::vector<std::size_t>& empty_positions() {
    static const std::vector<std::size_t> kEmpty;
    return kEmpty;
  }

  static std::vector<std::string> sorted_keys(
      const std::unordered_map<std::string, std::vector<std::size_t>>& m) {
    std::vector<std::string> keys;
    keys.reserve(m.size());
    for (const auto& [k, _] : m) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    return keys;
  }

  std::vector<Post> posts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> user_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> subreddit_index_;
  StoreProvenance provenance_;
};

// ---------------------------------------------------------------------------
// Ingest

struct IngestOptions {
  // Subreddits with fewer posts than this are dropped after deduplication.
  std::size_t min_subreddit_posts = 20;
  unsigned threads = default_concurrency();
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t duplicates = 0;
  std::size_t dropped_small_subreddit = 0;
  std::size_t dropped_subreddits = 0;

  friend bool operator==(const IngestReport&, const IngestReport&) = default;
};

inline json to_json(const IngestReport& r) {
  return json{{"lines", r.lines},
              {"accepted", r.accepted},
              {"rejected", r.rejected},
              {"duplicates", r.duplicates},
              {"dropped_small_subreddit", r.dropped_small_subreddit},
              {"dropped_subreddits", r.dropped_subreddits}};
}

struct IngestResult {
  CorpusStore store;
  IngestReport report;
};

inline IngestResult ingest_lines(const std::vector<std::string>& lines, const IngestOptions& options = {}) {
  std::vector<std::optional<Post>> parsed(lines.size());
  parallel_for(lines.size(), options.threads, [&](std::size_t i) { parsed[i] = parse_post(lines[i]); });

  IngestReport report;
  std::vector<Post> kept;
  std::unordered_map<std::string, bool> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    // Blank lines are separators, not records.
    if (trim(lines[i]).empty()) continue;
    ++report.lines;
    if (!parsed[i]) {
      ++report.rejected;
      continue;
    }
    if (!seen.emplace(parsed[i]->post_id, true).second) {
      ++report.duplicates;
      continue;
    }
    ++report.accepted;
    kept.push_back(std::move(*parsed[i]));
  }

  if (options.min_subreddit_posts > 1) {
    std::unordered_map<std::string, std::size_t> per_sub;
    for (const auto& p : kept) ++per_sub[p.subreddit_id];
    for (const auto& [_, n] : per_sub) {
      if (n < options.min_subreddit_posts) ++report.dropped_subreddits;
    }
    std::erase_if(kept, [&](const Post& p) {
      const bool small = per_sub[p.subreddit_id] < options.min_subreddit_posts;
      if (small) ++report.dropped_small_subreddit;
      return small;
    });
  }

  StoreProvenance prov;
  prov.min_subreddit_posts = options.min_subreddit_posts;
  return {CorpusStore(std::move(kept), std::move(prov)), report};
}

inline IngestResult ingest(std::istream& source, const IngestOptions& options = {}) {
  if (!source) throw Error(ErrorKind::io, "unreadable source");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(source, line)) lines.push_back(std::move(line));
  if (source.bad()) throw Error(ErrorKind::io, "read failure on source");
  return ingest_lines(lines, options);
}

inline IngestResult ingest_file(const std::filesystem::path& path, const IngestOptions& options = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  auto result = ingest(in, options);
  auto prov = result.store.provenance();
  prov.source_hash = sha256_file(path);
  return {CorpusStore(std::vector<Post>(result.store.posts()), prov), result.report};
}

// ---------------------------------------------------------------------------
// Filters. Each returns a new store.

inline std::set<std::string> read_id_list(const std::filesystem::path& path) {
  std::set<std::string> ids;
  for (const auto& line : split_lines(read_file(path))) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    ids.emplace(t);
  }
  return ids;
}

inline std::string hash_id_set(const std::set<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) {
    joined += id;
    joined += '\n';
  }
  return sha256_hex(joined);
}

inline CorpusStore filter_known_bots(const CorpusStore& store, const std::set<std::string>& bot_list) {
  std::vector<Post> kept;
  kept.reserve(store.size());
  for (const auto& p : store.posts()) {
    if (!bot_list.count(p.author_id)) kept.push_back(p);
  }
  auto prov = store.provenance();
  prov.bot_list_hash = hash_id_set(bot_list);
  return CorpusStore(std::move(kept), std::move(prov));
}

// Users ranked by post count descending, ties by author_id ascending.
inline std::vector<std::pair<std::string, std::size_t>> rank_users_by_activity(const CorpusStore& store) {
  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(store.author_count());
  for (const auto& [author, positions] : store.user_index()) ranked.emplace_back(author, positions.size());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

inline std::set<std::string> top_chatty_users(const CorpusStore& store, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "chattiness fraction must be in [0,1]");
  }
  const auto ranked = rank_users_by_activity(store);
  const std::size_t remove = std::min(ceil_count(fraction, ranked.size()), ranked.size());
  std::set<std::string> removed;
  for (std::size_t i = 0; i < remove; ++i) removed.insert(ranked[i].first);
  return removed;
}

inline CorpusStore filter_top_chatty(const CorpusStore& store, double fraction = 0.01) {
  const auto removed = top_chatty_users(store, fraction);
  std::vector<Post> kept;
  kept.reserve(store.size());
  for (const auto& p : store.posts()) {
    if (!removed.count(p.author_id)) kept.push_back(p);
  }
  auto prov = store.provenance();
  prov.chattiness_fraction = fraction;
  return CorpusStore(std::move(kept), std::move(prov));
}

// ---------------------------------------------------------------------------
// Persisted form: <dir>/posts.jsonl + <dir>/manifest.json

inline json provenance_json(const StoreProvenance& p) {
  json j = json::object();
  j["bot_list_hash"] = p.bot_list_hash ? json(*p.bot_list_hash) : json(nullptr);
  j["chattiness_fraction"] = p.chattiness_fraction ? json(*p.chattiness_fraction) : json(nullptr);
  j["min_subreddit_posts"] = p.min_subreddit_posts ? json(*p.min_subreddit_posts) : json(nullptr);
  j["source_hash"] = p.source_hash ? json(*p.source_hash) : json(nullptr);
  return j;
}

inline StoreProvenance provenance_from_json(const json& j) {
  StoreProvenance p;
  if (j.contains("bot_list_hash") && j["bot_list_hash"].is_string()) p.bot_list_hash = j["bot_list_hash"];
  if (j.contains("chattiness_fraction") && j["chattiness_fraction"].is_number()) {
    p.chattiness_fraction = j["chattiness_fraction"].get<double>();
  }
  if (j.contains("min_subreddit_posts") && j["min_subreddit_posts"].is_number()) {
    p.min_subreddit_posts = j["min_subreddit_posts"].get<std::size_t>();
  }
  if (j.contains("source_hash") && j["source_hash"].is_string()) p.source_hash = j["source_hash"];
  return p;
}

inline std::string serialize_posts(const CorpusStore& store) {
  std::string out;
  for (const auto& p : store.posts()) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline void save_store(const CorpusStore& store, const std::filesystem::path& dir) {
  const std::string body = serialize_posts(store);
  write_file(dir / "posts.jsonl", body);
  json manifest = {{"kind", "corpus-store"},
                   {"posts", store.size()},
                   {"authors", store.author_count()},
                   {"subreddits", store.subreddit_index().size()},
                   {"posts_sha256", sha256_hex(body)},
                   {"provenance", provenance_json(store.provenance())}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline CorpusStore load_store(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "posts.jsonl")) {
    throw Error(ErrorKind::not_found, "no corpus store at " + dir.string());
  }
  StoreProvenance prov;
  if (std::filesystem::exists(dir / "manifest.json")) {
    prov = provenance_from_json(json::parse(read_file(dir / "manifest.json")).value("provenance", json::object()));
  }
  std::vector<Post> posts;
  for (const auto& line : split_lines(read_file(dir / "posts.jsonl"))) {
    if (trim(line).empty()) continue;
    auto p = parse_post(line);
    if (!p) throw Error(ErrorKind::parse, "corrupt store record in " + dir.string());
    posts.push_back(std::move(*p));
  }
  return CorpusStore(std::move(posts), std::move(prov));
}

}  // namespace splits
