#pragma once

// BM25 keyword retrieval over a demographic corpus and the cross-group
// pooled relevance filter that yields per-(demographic, topic) splits.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/common.hpp"
#include "splits/corpus.hpp"

namespace splits {

inline constexpr std::array<std::string_view, 10> kTopicCategories = {
    "Education & Academia",   "Entertainment & Media", "Finance & Investing",
    "Hobbies & Special Interests", "Humor & Memes",     "News & Current Events",
    "Professional & Career-oriented Spaces", "Sports & Fitness", "Technology & Gaming",
    "Travel & Geography",
};

inline constexpr std::size_t kMaxKeywords = 40;

struct TopicSpec {
  std::string category;
  std::string topic;
  std::vector<std::string> keywords;
};

// Lowercased ASCII alphanumeric runs. Every other byte separates tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c < 0x80 && std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline TopicSpec make_topic_spec(std::string category, std::string topic, const std::vector<std::string>& keywords) {
  if (std::find(kTopicCategories.begin(), kTopicCategories.end(), category) == kTopicCategories.end()) {
    throw Error(ErrorKind::invalid_argument, "unknown topic category: " + category);
  }
  TopicSpec spec{std::move(category), std::move(topic), {}};
  std::set<std::string> seen;
  for (const auto& k : keywords) {
    const std::string key = normalize_space_lower(k);
    if (key.empty() || !seen.insert(key).second) continue;
    spec.keywords.emplace_back(trim(k));
  }
  if (spec.keywords.empty()) throw Error(ErrorKind::invalid_argument, "topic " + spec.topic + " has no keywords");
  if (spec.keywords.size() > kMaxKeywords) {
    throw Error(ErrorKind::invalid_argument, "topic " + spec.topic + " has more than 40 keywords");
  }
  return spec;
}

inline std::vector<TopicSpec> topic_specs_from_json(const json& j) {
  const json& list = j.is_array() ? j : j.at("topics");
  std::vector<TopicSpec> specs;
  std::set<std::string> names;
  for (const auto& t : list) {
    specs.push_back(make_topic_spec(t.at("category"), t.at("topic"), t.at("keywords").get<std::vector<std::string>>()));
    if (!names.insert(specs.back().topic).second) {
      throw Error(ErrorKind::invalid_argument, "duplicate topic " + specs.back().topic);
    }
  }
  return specs;
}

inline std::vector<TopicSpec> load_topic_specs(const std::filesystem::path& path) {
  return topic_specs_from_json(json::parse(read_file(path)));
}

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

class Bm25Index {
 public:
  using DocId = std::uint32_t;

  struct Posting {
    DocId doc;
    std::uint32_t tf;
  };

  Bm25Index() = default;

  Bm25Index(std::span<const Post> posts, Bm25Params params, unsigned threads = default_concurrency())
      : params_(params) {
    std::vector<const Post*> ordered;
    ordered.reserve(posts.size());
    for (const auto& p : posts) ordered.push_back(&p);
    std::sort(ordered.begin(), ordered.end(), [](const Post* a, const Post* b) { return a->post_id < b->post_id; });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
      if (ordered[i]->post_id == ordered[i - 1]->post_id) {
        throw Error(ErrorKind::invalid_argument, "duplicate document " + ordered[i]->post_id);
      }
    }

    std::vector<std::vector<std::pair<std::string, std::uint32_t>>> doc_terms(ordered.size());
    parallel_for(ordered.size(), threads, [&](std::size_t i) {
      std::map<std::string, std::uint32_t> tf;
      for (auto& t : tokenize(ordered[i]->text)) ++tf[std::move(t)];
      doc_terms[i].assign(tf.begin(), tf.end());
    });

    doc_ids_.reserve(ordered.size());
    doc_lengths_.reserve(ordered.size());
    double total = 0.0;
    for (DocId d = 0; d < ordered.size(); ++d) {
      doc_ids_.push_back(ordered[d]->post_id);
      by_post_.emplace(ordered[d]->post_id, d);
      std::uint32_t len = 0;
      for (const auto& [term, tf] : doc_terms[d]) {
        len += tf;
        auto [it, inserted] = term_ids_.emplace(term, static_cast<std::uint32_t>(postings_.size()));
        if (inserted) postings_.emplace_back();
        postings_[it->second].push_back({d, tf});
      }
      doc_lengths_.push_back(len);
      total += len;
    }
    average_doc_length_ = doc_ids_.empty() ? 0.0 : total / static_cast<double>(doc_ids_.size());
  }

  std::size_t document_count() const { return doc_ids_.size(); }
  double average_doc_length() const { return average_doc_length_; }
  const Bm25Params& params() const { return params_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }

  std::size_t document_frequency(const std::string& term) const {
    auto it = term_ids_.find(term);
    return it == term_ids_.end() ? 0 : postings_[it->second].size();
  }

  std::uint32_t doc_length(const std::string& post_id) const { return doc_lengths_.at(doc_of(post_id)); }

  std::uint32_t term_frequency(const std::string& post_id, const std::string& term) const {
    auto it = term_ids_.find(term);
    if (it == term_ids_.end()) return 0;
    const DocId d = doc_of(post_id);
    const auto& list = postings_[it->second];
    auto p = std::lower_bound(list.begin(), list.end(), d, [](const Posting& a, DocId x) { return a.doc < x; });
    return p != list.end() && p->doc == d ? p->tf : 0;
  }

  double idf(std::size_t df) const {
    const double n = static_cast<double>(doc_ids_.size());
    const double f = static_cast<double>(df);
    return std::log(1.0 + (n - f + 0.5) / (f + 0.5));
  }

  // Adds one query term's contribution to every document containing it.
  void accumulate(const std::string& term, std::vector<double>& scores) const {
    auto it = term_ids_.find(term);
    if (it == term_ids_.end()) return;
    const auto& list = postings_[it->second];
    const double w = idf(list.size());
    const double k1 = params_.k1;
    const double b = params_.b;
    for (const auto& p : list) {
      const double tf = p.tf;
      const double norm = 1.0 - b + b * static_cast<double>(doc_lengths_[p.doc]) / average_doc_length_;
      scores[p.doc] += w * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
  }

 private:
  DocId doc_of(const std::string& post_id) const {
    auto it = by_post_.find(post_id);
    if (it == by_post_.end()) throw Error(ErrorKind::not_found, "document not indexed: " + post_id);
    return it->second;
  }

  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::unordered_map<std::string, DocId> by_post_;
  std::vector<std::uint32_t> doc_lengths_;
  double average_doc_length_ = 0.0;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::vector<Posting>> postings_;
};

inline Bm25Index build_index(std::span<const Post> posts, Bm25Params params = {}) {
  if (posts.empty()) throw Error(ErrorKind::invalid_argument, "cannot index an empty post list");
  return Bm25Index(posts, params);
}

struct SplitEntry {
  std::string post_id;
  double bm25_score = 0.0;
  double normalized = 0.0;  // filled by pool_and_filter

  friend bool operator==(const SplitEntry&, const SplitEntry&) = default;
};

// Query terms for a topic: the tokens of every keyword, so a multi-word
// keyword contributes the sum of its terms.
inline std::vector<std::string> query_terms(const TopicSpec& spec) {
  std::vector<std::string> terms;
  for (const auto& k : spec.keywords) {
    for (auto& t : tokenize(k)) terms.push_back(std::move(t));
  }
  return terms;
}

// Top `limit` documents by BM25 against the combined keyword query.
// Zero-score documents are dropped; ties by post_id ascending.
inline std::vector<SplitEntry> retrieve(const Bm25Index& index, const TopicSpec& spec, std::size_t limit = 3000) {
  if (spec.keywords.empty()) throw Error(ErrorKind::invalid_argument, "empty keyword list");
  std::vector<double> scores(index.document_count(), 0.0);
  for (const auto& term : query_terms(spec)) index.accumulate(term, scores);

  std::vector<Bm25Index::DocId> hits;
  for (Bm25Index::DocId d = 0; d < scores.size(); ++d) {
    if (scores[d] > 0.0) hits.push_back(d);
  }
  // Doc ids are assigned in post_id order, so id order breaks ties.
  auto better = [&](Bm25Index::DocId a, Bm25Index::DocId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t keep = std::min(limit, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
  std::vector<SplitEntry> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back({index.doc_ids()[hits[i]], scores[hits[i]], 0.0});
  return out;
}

struct TopicSplit {
  std::string demographic;
  std::string topic;
  std::vector<SplitEntry> entries;  // descending by score
  double cutoff = 0.0;              // normalized score of the last removed rank
};

// Pools every group's entries for one topic, normalizes by the pool
// maximum and removes the bottom `drop_fraction` (nearest rank, ties by
// post_id ascending). Survivors go back to their group in original order.
inline std::map<std::string, TopicSplit> pool_and_filter(const std::map<std::string, std::vector<SplitEntry>>& per_group,
                                                        const std::string& topic, double drop_fraction = 0.25) {
  if (!(drop_fraction >= 0.0 && drop_fraction <= 1.0)) {
    throw Error(ErrorKind::invalid_argument, "drop fraction must be in [0,1]");
  }
  struct Pooled {
    const std::string* group;
    std::size_t rank;
    const SplitEntry* entry;
    double normalized;
  };
  std::vector<Pooled> pool;
  double max_score = 0.0;
  for (const auto& [group, entries] : per_group) {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      pool.push_back({&group, i, &entries[i], 0.0});
      max_score = std::max(max_score, entries[i].bm25_score);
    }
  }
  std::map<std::string, TopicSplit> out;
  for (const auto& [group, _] : per_group) out[group] = TopicSplit{group, topic, {}, 0.0};
  if (pool.empty() || max_score <= 0.0) return out;

  for (auto& p : pool) p.normalized = p.entry->bm25_score / max_score;
  std::vector<std::size_t> ascending(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) ascending[i] = i;
  std::sort(ascending.begin(), ascending.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = pool[a];
    const auto& y = pool[b];
    if (x.normalized != y.normalized) return x.normalized < y.normalized;
    if (x.entry->post_id != y.entry->post_id) return x.entry->post_id < y.entry->post_id;
    return *x.group < *y.group;
  });
  const std::size_t removed = std::min(ceil_count(drop_fraction, pool.size()), pool.size());
  std::vector<bool> drop(pool.size(), false);
  for (std::size_t i = 0; i < removed; ++i) drop[ascending[i]] = true;
  const double cutoff = removed == 0 ? 0.0 : pool[ascending[removed - 1]].normalized;

  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (drop[i]) continue;
    SplitEntry e = *pool[i].entry;
    e.normalized = pool[i].normalized;
    out[*pool[i].group].entries.push_back(std::move(e));
  }
  for (auto& [_, split] : out) split.cutoff = cutoff;
  return out;
}

inline std::string serialize_split(const TopicSplit& split) {
  std::string out = "post_id\tbm25_score\tnormalized\n";
  for (const auto& e : split.entries) {
    out += e.post_id + '\t' + format_double(e.bm25_score) + '\t' + format_double(e.normalized) + '\n';
  }
  return out;
}

inline TopicSplit parse_split(std::string_view text, std::string demographic, std::string topic) {
  TopicSplit split{std::move(demographic), std::move(topic), {}, 0.0};
  const auto lines = split_lines(text);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cols;
    std::stringstream ss(lines[i]);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 3) throw Error(ErrorKind::parse, "bad split row " + std::to_string(i + 1));
    split.entries.push_back({cols[0], std::stod(cols[1]), std::stod(cols[2])});
  }
  return split;
}

}  // namespace splits
