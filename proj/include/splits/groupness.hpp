#pragma once

// Group-ness scoring of users against a demographic seed set, percentile
// thresholds, self-identification phrase scanning with model verification,
// and membership curves over group-ness percentile bins.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/chat.hpp"
#include "splits/common.hpp"
#include "splits/corpus.hpp"
#include "splits/prompts.hpp"

namespace splits {

struct GroupnessScore {
  std::string author_id;
  double score = 0.0;
  double percentile = 0.0;
  std::size_t posts = 0;  // chattiness: all posts by the user in the store

  friend bool operator==(const GroupnessScore&, const GroupnessScore&) = default;
};

// Sum over seed subreddits of ln(1 + posts by `author` there).
inline double groupness(const std::string& author, const std::set<std::string>& seed_set, const CorpusStore& store) {
  std::map<std::string, std::size_t> counts;
  for (auto pos : store.posts_by_author(author)) {
    const auto& sub = store.at(pos).subreddit_id;
    if (seed_set.count(sub)) ++counts[sub];
  }
  double score = 0.0;
  for (const auto& [_, c] : counts) score += std::log1p(static_cast<double>(c));
  return score;
}

// Percentile rank: share of the population with a strictly lower score,
// in [0, 100). Ties share a percentile.
inline void assign_percentiles(std::vector<GroupnessScore>& scores) {
  std::vector<double> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.push_back(s.score);
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (auto& s : scores) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), s.score) - sorted.begin();
    s.percentile = 100.0 * static_cast<double>(below) / n;
  }
}

// Nearest-rank threshold for the k-th percentile. Users scoring at or
// above it form the retained set.
inline double percentile_cutoff(std::span<const GroupnessScore> scores, double k) {
  if (scores.empty()) throw Error(ErrorKind::invalid_argument, "percentile of an empty population");
  if (!(k >= 0.0 && k <= 100.0)) throw Error(ErrorKind::invalid_argument, "percentile must be in [0,100]");
  std::vector<double> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.push_back(s.score);
  std::sort(sorted.begin(), sorted.end());
  return sorted[nearest_rank(k, sorted.size()) - 1];
}

// All posts by users with at least one post in the seed set, plus their
// scores.
struct GroupCorpus {
  std::string demographic;
  std::set<std::string> seed_set;
  std::vector<GroupnessScore> users;   // sorted by author_id
  std::vector<std::size_t> positions;  // store positions, ascending

  std::vector<std::string> retained_authors(double cutoff) const {
    std::vector<std::string> out;
    for (const auto& u : users) {
      if (u.score >= cutoff) out.push_back(u.author_id);
    }
    return out;
  }
};

inline GroupCorpus build_group_corpus(const CorpusStore& store, const std::string& demographic,
                                      const std::set<std::string>& seed_set) {
  GroupCorpus corpus;
  corpus.demographic = demographic;
  corpus.seed_set = seed_set;
  std::set<std::string> authors;
  for (const auto& sub : seed_set) {
    for (auto pos : store.posts_in_subreddit(sub)) authors.insert(store.at(pos).author_id);
  }
  for (const auto& a : authors) {
    const auto& positions = store.posts_by_author(a);
    corpus.users.push_back({a, groupness(a, seed_set, store), 0.0, positions.size()});
    corpus.positions.insert(corpus.positions.end(), positions.begin(), positions.end());
  }
  std::sort(corpus.positions.begin(), corpus.positions.end());
  if (!corpus.users.empty()) assign_percentiles(corpus.users);
  return corpus;
}

// ---------------------------------------------------------------------------
// Self-identification phrases

struct PhraseSet {
  std::string demographic;
  std::vector<std::string> self_id;
  std::vector<std::string> anti_self_id;

  void validate() const {
    if (self_id.empty() || anti_self_id.empty()) {
      throw Error(ErrorKind::invalid_argument, "phrase set for " + demographic + " needs both phrase lists");
    }
    std::set<std::string> self;
    for (const auto& p : self_id) self.insert(normalize_space_lower(p));
    for (const auto& p : anti_self_id) {
      if (self.count(normalize_space_lower(p))) {
        throw Error(ErrorKind::invalid_argument, "phrase appears in both lists: " + p);
      }
    }
  }
};

inline PhraseSet phrase_set_from_json(const json& j) {
  PhraseSet p{j.at("demographic"), j.at("self_id").get<std::vector<std::string>>(),
              j.at("anti_self_id").get<std::vector<std::string>>()};
  p.validate();
  return p;
}

inline PhraseSet load_phrase_set(const std::filesystem::path& path) {
  return phrase_set_from_json(json::parse(read_file(path)));
}

enum class PhraseKind { self, anti };

inline const char* to_string(PhraseKind k) { return k == PhraseKind::self ? "self" : "anti"; }

struct PhraseCandidate {
  std::string post_id;
  std::string author_id;
  std::string phrase;
  PhraseKind kind = PhraseKind::self;

  friend bool operator==(const PhraseCandidate&, const PhraseCandidate&) = default;
};

// Case-insensitive, whitespace-normalized substring match. One candidate
// per (post, phrase) hit, in post order then phrase-list order.
inline std::vector<PhraseCandidate> scan_phrases(std::span<const Post> posts, const PhraseSet& phrases,
                                                 unsigned threads = default_concurrency()) {
  struct Needle {
    std::string normalized;
    const std::string* phrase;
    PhraseKind kind;
  };
  std::vector<Needle> needles;
  for (const auto& p : phrases.self_id) needles.push_back({normalize_space_lower(p), &p, PhraseKind::self});
  for (const auto& p : phrases.anti_self_id) needles.push_back({normalize_space_lower(p), &p, PhraseKind::anti});
  std::erase_if(needles, [](const Needle& n) { return n.normalized.empty(); });

  std::vector<std::vector<PhraseCandidate>> hits(posts.size());
  parallel_for(posts.size(), threads, [&](std::size_t i) {
    const std::string haystack = normalize_space_lower(posts[i].text);
    for (const auto& n : needles) {
      if (haystack.find(n.normalized) != std::string::npos) {
        hits[i].push_back({posts[i].post_id, posts[i].author_id, *n.phrase, n.kind});
      }
    }
  });
  std::vector<PhraseCandidate> out;
  for (auto& h : hits) out.insert(out.end(), h.begin(), h.end());
  return out;
}

enum class Verification { verified, rejected, indeterminate };

inline const char* to_string(Verification v) {
  switch (v) {
    case Verification::verified: return "verified";
    case Verification::rejected: return "rejected";
    case Verification::indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

struct SelfIdAnswer {
  bool self_identifies = false;
  bool mutually_exclusive = false;
};

// Reads the two yes/no lines of a verifier response. nullopt when either
// line is missing or not yes/no.
inline std::optional<SelfIdAnswer> parse_self_id_response(std::string_view response) {
  std::optional<bool> self;
  std::optional<bool> anti;
  auto answer_after = [](const std::string& lower_line, std::size_t colon) -> std::optional<bool> {
    std::string rest(trim(std::string_view(lower_line).substr(colon + 1)));
    while (!rest.empty() && !std::isalpha(static_cast<unsigned char>(rest.back()))) rest.pop_back();
    while (!rest.empty() && !std::isalpha(static_cast<unsigned char>(rest.front()))) rest.erase(rest.begin());
    if (rest == "yes") return true;
    if (rest == "no") return false;
    return std::nullopt;
  };
  for (const auto& raw : split_lines(response)) {
    const std::string line = normalize_space_lower(raw);
    constexpr std::string_view kAnti = "self-identifies as mutually exclusive demographic:";
    constexpr std::string_view kSelf = "self-identifies as demographic:";
    if (auto p = line.find(kAnti); p != std::string::npos) {
      anti = answer_after(line, p + kAnti.size() - 1);
    } else if (auto q = line.find(kSelf); q != std::string::npos) {
      self = answer_after(line, q + kSelf.size() - 1);
    }
  }
  if (!self || !anti) return std::nullopt;
  return SelfIdAnswer{*self, *anti};
}

struct VerifyOptions {
  unsigned in_flight = 8;
};

// One verifier call per distinct post. A self candidate is verified when
// the model answers yes to self-identification; an anti candidate when it
// answers yes to the mutually exclusive line. Unparseable responses and
// exhausted transport retries yield indeterminate.
inline std::vector<Verification> verify_candidates(const std::vector<PhraseCandidate>& candidates,
                                                   const CorpusStore& store, ChatModelClient& client,
                                                   const PhraseSet& phrases, const VerifyOptions& options = {}) {
  std::vector<std::string> post_ids;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& c : candidates) {
    if (slot.emplace(c.post_id, post_ids.size()).second) post_ids.push_back(c.post_id);
  }
  std::vector<std::optional<SelfIdAnswer>> answers(post_ids.size());
  parallel_for(post_ids.size(), options.in_flight, [&](std::size_t i) {
    const Post* post = store.find(post_ids[i]);
    if (!post) throw Error(ErrorKind::consistency, "candidate post missing from store: " + post_ids[i]);
    try {
      answers[i] = parse_self_id_response(client.complete(prompts::render_self_id_prompt(phrases.demographic, post->text)));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport) throw;
      answers[i] = std::nullopt;
    }
  });
  std::vector<Verification> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    const auto& a = answers[slot.at(c.post_id)];
    if (!a) {
      out.push_back(Verification::indeterminate);
      continue;
    }
    const bool yes = c.kind == PhraseKind::self ? a->self_identifies : a->mutually_exclusive;
    out.push_back(yes ? Verification::verified : Verification::rejected);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Membership curve

struct CurveUser {
  std::string author_id;
  double percentile = 0.0;
  std::size_t posts = 0;
  std::size_t self_hits = 0;  // posts with a verified self-ID candidate
  std::size_t anti_hits = 0;  // posts with a verified anti-self-ID candidate
};

struct CurveBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t users = 0;
  std::optional<double> self_rate;
  std::optional<double> anti_rate;
  std::optional<double> mean_chattiness;
};

struct MembershipCurve {
  std::vector<CurveBin> bins;
};

// Per bin: rate = (hits per user) / (mean posts per user). Bins are
// [lo, hi), the last one closed at 100. Empty bins carry no rates.
inline MembershipCurve membership_curve(const std::vector<CurveUser>& users, double bin_width) {
  if (!(bin_width > 0.0 && bin_width <= 100.0)) throw Error(ErrorKind::invalid_argument, "bin width must be in (0,100]");
  const double count_d = 100.0 / bin_width;
  const auto count = static_cast<std::size_t>(std::llround(count_d));
  if (std::abs(count_d - static_cast<double>(count)) > 1e-9) {
    throw Error(ErrorKind::invalid_argument, "bin width must divide 100");
  }
  struct Acc {
    std::size_t users = 0, posts = 0, self = 0, anti = 0;
  };
  std::vector<Acc> acc(count);
  for (const auto& u : users) {
    auto b = static_cast<std::size_t>(std::floor(u.percentile / bin_width + 1e-12));
    b = std::min(b, count - 1);
    ++acc[b].users;
    acc[b].posts += u.posts;
    acc[b].self += u.self_hits;
    acc[b].anti += u.anti_hits;
  }
  MembershipCurve curve;
  for (std::size_t i = 0; i < count; ++i) {
    CurveBin bin;
    bin.lower = bin_width * static_cast<double>(i);
    bin.upper = i + 1 == count ? 100.0 : bin_width * static_cast<double>(i + 1);
    bin.users = acc[i].users;
    if (acc[i].users > 0) {
      const double n = static_cast<double>(acc[i].users);
      const double mean_posts = static_cast<double>(acc[i].posts) / n;
      bin.mean_chattiness = mean_posts;
      if (mean_posts > 0) {
        bin.self_rate = (static_cast<double>(acc[i].self) / n) / mean_posts;
        bin.anti_rate = (static_cast<double>(acc[i].anti) / n) / mean_posts;
      }
    }
    curve.bins.push_back(bin);
  }
  return curve;
}

// Joins scores with verified candidates, counting distinct posts.
inline std::vector<CurveUser> curve_users(const GroupCorpus& corpus, const std::vector<PhraseCandidate>& candidates,
                                          const std::vector<Verification>& verdicts) {
  if (candidates.size() != verdicts.size()) throw Error(ErrorKind::invalid_argument, "one verdict per candidate");
  std::map<std::string, std::set<std::string>> self_posts;
  std::map<std::string, std::set<std::string>> anti_posts;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (verdicts[i] != Verification::verified) continue;
    auto& target = candidates[i].kind == PhraseKind::self ? self_posts : anti_posts;
    target[candidates[i].author_id].insert(candidates[i].post_id);
  }
  std::vector<CurveUser> out;
  out.reserve(corpus.users.size());
  for (const auto& u : corpus.users) {
    CurveUser cu{u.author_id, u.percentile, u.posts, 0, 0};
    if (auto it = self_posts.find(u.author_id); it != self_posts.end()) cu.self_hits = it->second.size();
    if (auto it = anti_posts.find(u.author_id); it != anti_posts.end()) cu.anti_hits = it->second.size();
    out.push_back(cu);
  }
  return out;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::string serialize_curve(const MembershipCurve& curve) {
  std::string out = "bin_lower\tbin_upper\tself_rate\tanti_rate\tusers\tmean_chattiness\n";
  for (const auto& b : curve.bins) {
    out += format_double(b.lower) + '\t' + format_double(b.upper) + '\t' + format_optional(b.self_rate) + '\t' +
           format_optional(b.anti_rate) + '\t' + std::to_string(b.users) + '\t' + format_optional(b.mean_chattiness) +
           '\n';
  }
  return out;
}

}  // namespace splits
