#pragma once

// User-overlap similarity between subreddits (cosine and Jaccard over the
// sets of users) with sparse all-pairs accumulation and top-k queries.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "splits/common.hpp"
#include "splits/corpus.hpp"

namespace splits {

enum class Measure { cosine, jaccard };

inline Measure parse_measure(std::string_view s) {
  if (s == "cosine") return Measure::cosine;
  if (s == "jaccard") return Measure::jaccard;
  throw Error(ErrorKind::invalid_argument, "unknown measure " + std::string(s));
}

struct SimilarityScore {
  std::string first;
  std::string second;
  double cosine = 0.0;
  double jaccard = 0.0;
  std::size_t intersection = 0;

  friend bool operator==(const SimilarityScore&, const SimilarityScore&) = default;
};

inline double cosine_from_counts(std::size_t inter, std::size_t a, std::size_t b) {
  if (inter == 0 || a == 0 || b == 0) return 0.0;
  return static_cast<double>(inter) / std::sqrt(static_cast<double>(a) * static_cast<double>(b));
}

inline double jaccard_from_counts(std::size_t inter, std::size_t a, std::size_t b) {
  if (inter == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(a + b - inter);
}

inline double score_for(Measure m, std::size_t inter, std::size_t a, std::size_t b) {
  return m == Measure::cosine ? cosine_from_counts(inter, a, b) : jaccard_from_counts(inter, a, b);
}

// Bipartite subreddit/user incidence in both orientations. Subreddit ids
// are assigned in lexicographic name order, so id order is name order.
class UserSetIndex {
 public:
  using Id = std::uint32_t;

  UserSetIndex() = default;

  // membership: subreddit -> users (duplicates allowed, collapsed).
  explicit UserSetIndex(const std::map<std::string, std::vector<std::string>>& membership) {
    std::set<std::string> users;
    for (const auto& [sub, members] : membership) users.insert(members.begin(), members.end());
    subreddit_names_.reserve(membership.size());
    for (const auto& [sub, _] : membership) subreddit_names_.push_back(sub);
    user_names_.assign(users.begin(), users.end());
    for (Id i = 0; i < subreddit_names_.size(); ++i) subreddit_ids_.emplace(subreddit_names_[i], i);
    for (Id i = 0; i < user_names_.size(); ++i) user_ids_.emplace(user_names_[i], i);

    members_.resize(subreddit_names_.size());
    inverted_.resize(user_names_.size());
    for (const auto& [sub, users_of_sub] : membership) {
      const Id s = subreddit_ids_.at(sub);
      for (const auto& u : users_of_sub) members_[s].push_back(user_ids_.at(u));
    }
    for (auto& m : members_) {
      std::sort(m.begin(), m.end());
      m.erase(std::unique(m.begin(), m.end()), m.end());
    }
    for (Id s = 0; s < members_.size(); ++s) {
      for (Id u : members_[s]) inverted_[u].push_back(s);
    }
  }

  const std::vector<std::string>& subreddits() const { return subreddit_names_; }
  const std::vector<std::string>& users() const { return user_names_; }
  std::size_t subreddit_count() const { return subreddit_names_.size(); }
  std::size_t user_count() const { return user_names_.size(); }

  bool contains(const std::string& subreddit) const { return subreddit_ids_.count(subreddit) != 0; }

  Id id_of(const std::string& subreddit) const {
    auto it = subreddit_ids_.find(subreddit);
    if (it == subreddit_ids_.end()) throw Error(ErrorKind::not_found, "unknown subreddit " + subreddit);
    return it->second;
  }

  const std::string& name_of(Id id) const { return subreddit_names_.at(id); }
  const std::string& user_name(Id id) const { return user_names_.at(id); }

  // Sorted user ids of a subreddit.
  const std::vector<Id>& members(Id subreddit) const { return members_.at(subreddit); }
  // Sorted subreddit ids of a user.
  const std::vector<Id>& subreddits_of(Id user) const { return inverted_.at(user); }

  std::vector<std::string> member_names(const std::string& subreddit) const {
    std::vector<std::string> out;
    for (Id u : members(id_of(subreddit))) out.push_back(user_names_[u]);
    return out;
  }

  // Content fingerprint; stable across builds of the same incidence.
  std::string fingerprint() const {
    std::string buf;
    for (Id s = 0; s < members_.size(); ++s) {
      buf += subreddit_names_[s];
      buf += '\t';
      for (Id u : members_[s]) {
        buf += user_names_[u];
        buf += ',';
      }
      buf += '\n';
    }
    return sha256_hex(buf);
  }

 private:
  std::vector<std::string> subreddit_names_;
  std::vector<std::string> user_names_;
  std::unordered_map<std::string, Id> subreddit_ids_;
  std::unordered_map<std::string, Id> user_ids_;
  std::vector<std::vector<Id>> members_;
  std::vector<std::vector<Id>> inverted_;
};

// A user of a subreddit is any author with at least one post there.
inline UserSetIndex build_user_set_index(const CorpusStore& store) {
  std::map<std::string, std::vector<std::string>> membership;
  for (const auto& [sub, positions] : store.subreddit_index()) {
    auto& users = membership[sub];
    users.reserve(positions.size());
    for (auto pos : positions) users.push_back(store.at(pos).author_id);
  }
  return UserSetIndex(membership);
}

inline std::size_t intersection_size(const std::vector<UserSetIndex::Id>& a,
                                     const std::vector<UserSetIndex::Id>& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) {
      ++n;
      ++i;
      ++j;
    } else if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return n;
}

inline SimilarityScore similarity(const UserSetIndex& index, const std::string& s1, const std::string& s2) {
  const auto& a = index.members(index.id_of(s1));
  const auto& b = index.members(index.id_of(s2));
  const std::size_t inter = intersection_size(a, b);
  return {s1, s2, cosine_from_counts(inter, a.size(), b.size()), jaccard_from_counts(inter, a.size(), b.size()),
          inter};
}

struct Neighbor {
  std::string subreddit;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct OverlapOptions {
  // Users belonging to more subreddits than this are skipped during
  // accumulation. Set sizes are unaffected.
  std::optional<std::size_t> max_user_degree;
  unsigned threads = default_concurrency();
};

namespace detail {

// Co-occurrence counts from `source` to every other subreddit, via the
// inverted index. `counts` must be zeroed and sized to subreddit_count;
// touched lists the ids written.
inline void accumulate_row(const UserSetIndex& index, UserSetIndex::Id source,
                           const std::optional<std::size_t>& max_degree, std::vector<std::uint32_t>& counts,
                           std::vector<UserSetIndex::Id>& touched) {
  touched.clear();
  for (auto u : index.members(source)) {
    const auto& subs = index.subreddits_of(u);
    if (max_degree && subs.size() > *max_degree) continue;
    for (auto t : subs) {
      if (t == source) continue;
      if (counts[t]++ == 0) touched.push_back(t);
    }
  }
}

}  // namespace detail

// Best k candidates by `measure`, excluding the source itself, zero-overlap
// subreddits and `exclude`. Ties by subreddit name ascending.
inline std::vector<Neighbor> top_neighbors(const UserSetIndex& index, const std::string& subreddit, std::size_t k,
                                           Measure measure, const std::set<std::string>& exclude = {},
                                           const OverlapOptions& options = {}) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "k must be >= 1");
  const auto source = index.id_of(subreddit);
  std::vector<std::uint32_t> counts(index.subreddit_count(), 0);
  std::vector<UserSetIndex::Id> touched;
  detail::accumulate_row(index, source, options.max_user_degree, counts, touched);

  const std::size_t source_size = index.members(source).size();
  struct Scored {
    UserSetIndex::Id id;
    double score;
  };
  std::vector<Scored> scored;
  scored.reserve(touched.size());
  for (auto t : touched) {
    if (exclude.count(index.name_of(t))) continue;
    scored.push_back({t, score_for(measure, counts[t], source_size, index.members(t).size())});
  }
  auto better = [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
  std::vector<Neighbor> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back({index.name_of(scored[i].id), scored[i].score});
  return out;
}

// Every pair with a shared user, once, ordered by (first, second) name.
// Work is bounded by the sum over users of degree squared.
inline std::vector<SimilarityScore> pairwise_overlap_stats(const UserSetIndex& index,
                                                           const OverlapOptions& options = {}) {
  const std::size_t n = index.subreddit_count();
  std::vector<std::vector<SimilarityScore>> rows(n);
  const unsigned threads = std::max(1u, options.threads);
  // Partition rows into contiguous chunks, one scratch buffer per chunk.
  const std::size_t chunks = std::min<std::size_t>(n, static_cast<std::size_t>(threads) * 4);
  parallel_for(chunks, threads, [&](std::size_t c) {
    std::vector<std::uint32_t> counts(n, 0);
    std::vector<UserSetIndex::Id> touched;
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    for (std::size_t s = begin; s < end; ++s) {
      const auto source = static_cast<UserSetIndex::Id>(s);
      detail::accumulate_row(index, source, options.max_user_degree, counts, touched);
      std::sort(touched.begin(), touched.end());
      const std::size_t a = index.members(source).size();
      for (auto t : touched) {
        if (t > source) {
          const std::size_t b = index.members(t).size();
          const std::size_t inter = counts[t];
          rows[s].push_back({index.name_of(source), index.name_of(t), cosine_from_counts(inter, a, b),
                             jaccard_from_counts(inter, a, b), inter});
        }
        counts[t] = 0;
      }
    }
  });
  std::vector<SimilarityScore> out;
  for (auto& row : rows) {
    out.insert(out.end(), std::make_move_iterator(row.begin()), std::make_move_iterator(row.end()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persisted cache: header line with the index fingerprint, then one
// tab-separated (s1, s2, cosine, jaccard, intersection) row per pair.

inline std::string serialize_similarity_cache(const UserSetIndex& index,
                                              const std::vector<SimilarityScore>& scores) {
  std::string out = "# splits-similarity-cache fingerprint=" + index.fingerprint() + "\n";
  out += "s1\ts2\tcosine\tjaccard\tintersection\n";
  for (const auto& s : scores) {
    out += s.first + '\t' + s.second + '\t' + format_double(s.cosine) + '\t' + format_double(s.jaccard) + '\t' +
           std::to_string(s.intersection) + '\n';
  }
  return out;
}

struct SimilarityCache {
  std::string fingerprint;
  std::vector<SimilarityScore> scores;
};

inline SimilarityCache parse_similarity_cache(std::string_view text) {
  const auto lines = split_lines(text);
  constexpr std::string_view kPrefix = "# splits-similarity-cache fingerprint=";
  if (lines.size() < 2 || lines[0].rfind(kPrefix, 0) != 0) {
    throw Error(ErrorKind::parse, "missing similarity cache header");
  }
  SimilarityCache cache;
  cache.fingerprint = lines[0].substr(kPrefix.size());
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::vector<std::string> cols;
    std::stringstream ss(lines[i]);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) throw Error(ErrorKind::parse, "bad similarity cache row " + std::to_string(i + 1));
    cache.scores.push_back({cols[0], cols[1], std::stod(cols[2]), std::stod(cols[3]),
                            static_cast<std::size_t>(std::stoull(cols[4]))});
  }
  return cache;
}

}  // namespace splits
