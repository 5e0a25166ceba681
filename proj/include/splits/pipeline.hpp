#pragma once

// Pipeline orchestration behind the command-line tool. Every command reads
// its upstream artifacts from the run directory, writes its own artifacts
// there, and records a manifest of input hashes, parameters and output
// hashes under run/manifests/.

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/chat.hpp"
#include "splits/common.hpp"
#include "splits/corpus.hpp"
#include "splits/groupness.hpp"
#include "splits/gteval.hpp"
#include "splits/humanval.hpp"
#include "splits/sampler.hpp"
#include "splits/seedset.hpp"
#include "splits/similarity.hpp"
#include "splits/topicsplit.hpp"

namespace splits {

namespace fs = std::filesystem;

struct DemographicConfig {
  std::string name;
  std::optional<fs::path> seed_set;              // seed-set artifact file
  std::vector<std::string> seed_subreddits;      // inline alternative
  std::optional<fs::path> phrase_set;
  std::optional<double> k;                       // group-ness percentile
  std::string initial_subreddit;                 // annotation entry point
};

struct PipelineConfig {
  fs::path base_dir = ".";
  fs::path run_dir = "run";
  std::optional<fs::path> corpus;
  std::optional<fs::path> bot_list;
  std::optional<fs::path> topic_specs;
  std::optional<fs::path> annotations;
  std::vector<DemographicConfig> demographics;

  double chattiness_fraction = 0.01;
  std::size_t min_subreddit_posts = 20;
  double groupness_k = 75.0;
  Bm25Params bm25;
  std::size_t retrieve_limit = 3000;
  double drop_fraction = 0.25;
  std::size_t n = 42;
  std::uint64_t seed = 1;
  std::vector<std::size_t> sweep_n = {2, 4, 8, 16, 24, 32, 42};
  std::size_t sweep_max_instances = 0;  // 0 = all
  unsigned in_flight = 8;
  unsigned threads = 0;                 // 0 = hardware concurrency
  double curve_bin_width = 10.0;
  std::optional<std::size_t> max_user_degree;
  std::size_t slate_size = 20;
  std::size_t sample_posts = 5;

  std::optional<ChatEndpointConfig> tm;
  std::optional<ChatEndpointConfig> cm;
  std::optional<ChatEndpointConfig> verifier;  // defaults to cm

  unsigned thread_count() const { return threads == 0 ? default_concurrency() : threads; }
  fs::path run() const { return resolve(run_dir); }
  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

inline json parameters_json(const PipelineConfig& c) {
  json demos = json::array();
  for (const auto& d : c.demographics) {
    demos.push_back({{"name", d.name},
                     {"k", d.k ? json(*d.k) : json(nullptr)},
                     {"initial_subreddit", d.initial_subreddit},
                     {"seed_subreddits", d.seed_subreddits}});
  }
  return json{{"chattiness_fraction", c.chattiness_fraction},
              {"min_subreddit_posts", c.min_subreddit_posts},
              {"groupness_k", c.groupness_k},
              {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
              {"retrieve_limit", c.retrieve_limit},
              {"drop_fraction", c.drop_fraction},
              {"n", c.n},
              {"seed", c.seed},
              {"sweep_n", c.sweep_n},
              {"sweep_max_instances", c.sweep_max_instances},
              {"curve_bin_width", c.curve_bin_width},
              {"max_user_degree", c.max_user_degree ? json(*c.max_user_degree) : json(nullptr)},
              {"slate_size", c.slate_size},
              {"sample_posts", c.sample_posts},
              {"demographics", demos}};
}

inline void apply_parameter(PipelineConfig& c, const std::string& key, const json& v) {
  if (key == "chattiness_fraction") c.chattiness_fraction = v.get<double>();
  else if (key == "min_subreddit_posts") c.min_subreddit_posts = v.get<std::size_t>();
  else if (key == "groupness_k") c.groupness_k = v.get<double>();
  else if (key == "bm25") {
    c.bm25.k1 = v.value("k1", c.bm25.k1);
    c.bm25.b = v.value("b", c.bm25.b);
  } else if (key == "bm25_k1") c.bm25.k1 = v.get<double>();
  else if (key == "bm25_b") c.bm25.b = v.get<double>();
  else if (key == "retrieve_limit") c.retrieve_limit = v.get<std::size_t>();
  else if (key == "drop_fraction") c.drop_fraction = v.get<double>();
  else if (key == "n") c.n = v.get<std::size_t>();
  else if (key == "seed") c.seed = v.get<std::uint64_t>();
  else if (key == "sweep_n") c.sweep_n = v.get<std::vector<std::size_t>>();
  else if (key == "sweep_max_instances") c.sweep_max_instances = v.get<std::size_t>();
  else if (key == "in_flight") c.in_flight = v.get<unsigned>();
  else if (key == "threads") c.threads = v.get<unsigned>();
  else if (key == "curve_bin_width") c.curve_bin_width = v.get<double>();
  else if (key == "max_user_degree") {
    if (v.is_null()) c.max_user_degree.reset();
    else c.max_user_degree = v.get<std::size_t>();
  } else if (key == "slate_size") c.slate_size = v.get<std::size_t>();
  else if (key == "sample_posts") c.sample_posts = v.get<std::size_t>();
  else throw Error(ErrorKind::invalid_argument, "unknown parameter " + key);
}

inline void validate_config(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::invalid_argument, m); };
  if (!(c.chattiness_fraction >= 0.0 && c.chattiness_fraction <= 1.0)) fail("chattiness_fraction must be in [0,1]");
  if (!(c.groupness_k >= 0.0 && c.groupness_k <= 100.0)) fail("groupness_k must be in [0,100]");
  for (const auto& d : c.demographics) {
    if (d.name.empty()) fail("demographic without a name");
    if (d.k && !(*d.k >= 0.0 && *d.k <= 100.0)) fail("k for " + d.name + " must be in [0,100]");
  }
  if (!(c.drop_fraction >= 0.0 && c.drop_fraction <= 1.0)) fail("drop_fraction must be in [0,1]");
  if (c.bm25.k1 < 0.0 || c.bm25.b < 0.0 || c.bm25.b > 1.0) fail("bm25 parameters out of range");
  if (c.retrieve_limit == 0) fail("retrieve_limit must be positive");
  check_calibration_size(c.n);
  for (auto n : c.sweep_n) check_calibration_size(n);
  if (c.in_flight == 0) fail("in_flight must be positive");
  if (c.slate_size == 0) fail("slate_size must be positive");
}

inline PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  if (j.contains("run_dir")) c.run_dir = j["run_dir"].get<std::string>();
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    auto opt = [&](const char* key, std::optional<fs::path>& out) {
      if (p.contains(key) && !p[key].is_null()) out = p[key].get<std::string>();
    };
    opt("corpus", c.corpus);
    opt("bot_list", c.bot_list);
    opt("topic_specs", c.topic_specs);
    opt("annotations", c.annotations);
  }
  if (j.contains("demographics")) {
    for (const auto& d : j["demographics"]) {
      DemographicConfig dc;
      dc.name = d.at("name");
      if (d.contains("seed_set")) dc.seed_set = d["seed_set"].get<std::string>();
      dc.seed_subreddits = d.value("seed_subreddits", std::vector<std::string>{});
      if (d.contains("phrase_set")) dc.phrase_set = d["phrase_set"].get<std::string>();
      if (d.contains("k")) dc.k = d["k"].get<double>();
      dc.initial_subreddit = d.value("initial_subreddit", std::string{});
      c.demographics.push_back(std::move(dc));
    }
  }
  if (j.contains("parameters")) {
    for (const auto& [key, v] : j["parameters"].items()) apply_parameter(c, key, v);
  }
  if (j.contains("models")) {
    const auto& m = j["models"];
    if (m.contains("tm")) c.tm = endpoint_config_from_json(m["tm"]);
    if (m.contains("cm")) c.cm = endpoint_config_from_json(m["cm"]);
    if (m.contains("verifier")) c.verifier = endpoint_config_from_json(m["verifier"]);
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Run-directory layout

struct RunLayout {
  fs::path root;

  fs::path store() const { return root / "corpus"; }
  fs::path ingest_report() const { return root / "corpus" / "ingest_report.json"; }
  fs::path similarity() const { return root / "similarity" / "pairs.tsv"; }
  fs::path annotation_state() const { return root / "annotation" / "sessions"; }
  fs::path annotation_exports() const { return root / "annotation" / "seed_sets"; }
  fs::path groupness(const std::string& demo) const { return root / "groupness" / (slugify(demo) + ".tsv"); }
  fs::path groupness_summary() const { return root / "groupness" / "summary.json"; }
  fs::path selfid_candidates(const std::string& demo) const {
    return root / "selfid" / (slugify(demo) + "_candidates.jsonl");
  }
  fs::path selfid_curve(const std::string& demo) const { return root / "selfid" / (slugify(demo) + "_curve.tsv"); }
  fs::path topic_split(const std::string& topic, const std::string& demo) const {
    return root / "topics" / slugify(topic) / (slugify(demo) + ".tsv");
  }
  fs::path topics_summary() const { return root / "topics" / "summary.json"; }
  fs::path payload() const { return root / "dataset" / "payload.jsonl"; }
  fs::path key() const { return root / "dataset" / "key.jsonl"; }
  fs::path instance_meta() const { return root / "dataset" / "metadata.jsonl"; }
  fs::path theories() const { return root / "theories" / "theories.jsonl"; }
  fs::path results() const { return root / "eval" / "results.jsonl"; }
  fs::path eval_summary() const { return root / "eval" / "summary.json"; }
  fs::path report(Grouping g) const { return root / "report" / (std::string(to_string(g)) + ".tsv"); }
  fs::path report_summary() const { return root / "report" / "summary.json"; }
  fs::path sweep() const { return root / "sweep" / "sweep.tsv"; }
  fs::path humanval() const { return root / "humanval" / "dimensions.tsv"; }
  fs::path transcripts() const { return root / "cache" / "transcripts.jsonl"; }
  fs::path manifest(const std::string& command) const { return root / "manifests" / (command + ".json"); }
};

// Tracks hashed inputs and outputs for a command's manifest.
class Manifest {
 public:
  Manifest(std::string command, const RunLayout& layout) : command_(std::move(command)), layout_(layout) {}

  void input(const std::string& name, const fs::path& path) { inputs_[name] = sha256_file(path); }
  void input_value(const std::string& name, const std::string& hash) { inputs_[name] = hash; }
  void param(const std::string& name, json value) { params_[name] = std::move(value); }

  void output(const fs::path& path, std::string_view contents) {
    write_file(path, contents);
    outputs_[fs::relative(path, layout_.root).generic_string()] = sha256_hex(contents);
  }

  // Records a file written by other code.
  void output_file(const fs::path& path) {
    outputs_[fs::relative(path, layout_.root).generic_string()] = sha256_file(path);
  }

  void stat(const std::string& name, json value) { stats_[name] = std::move(value); }

  void write() const {
    json j{{"command", command_}, {"inputs", inputs_}, {"parameters", params_}, {"outputs", outputs_},
           {"stats", stats_}};
    write_file(layout_.manifest(command_), j.dump(2) + "\n");
  }

 private:
  std::string command_;
  const RunLayout& layout_;
  json inputs_ = json::object();
  json params_ = json::object();
  json outputs_ = json::object();
  json stats_ = json::object();
};

inline void require_upstream(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::upstream_missing,
                "missing " + path.string() + "; run the '" + producer + "' command first");
  }
}

inline const fs::path& require_path(const std::optional<fs::path>& p, const std::string& what) {
  if (!p) throw Error(ErrorKind::invalid_argument, "config lacks " + what);
  return *p;
}

inline void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::invalid_argument, "input file does not exist: " + path.string());
}

// Model clients created through the context share one transcript cache
// under run/cache.
struct CommandContext {
  PipelineConfig config;
  std::ostream* log = &std::cerr;
  // Overrides endpoint construction, e.g. for in-process stubs.
  std::function<std::shared_ptr<ChatModelClient>(const ChatEndpointConfig&)> client_factory;
  std::shared_ptr<TranscriptStore> transcripts;

  RunLayout layout() const { return {config.run()}; }

  std::shared_ptr<TranscriptStore> cache() {
    if (!transcripts) transcripts = std::make_shared<TranscriptStore>(layout().transcripts());
    return transcripts;
  }

  std::shared_ptr<ChatModelClient> client(const std::optional<ChatEndpointConfig>& endpoint, const std::string& role) {
    if (!endpoint) throw Error(ErrorKind::invalid_argument, "config lacks models." + role);
    std::shared_ptr<ChatModelClient> inner;
    if (client_factory) {
      inner = client_factory(*endpoint);
      return std::make_shared<CachingClient>(inner, cache());
    }
    return make_endpoint_client(*endpoint, cache());
  }
};

// ---------------------------------------------------------------------------
// Commands

inline CorpusStore load_run_store(const RunLayout& layout) {
  require_upstream(layout.store() / "manifest.json", "ingest");
  return load_store(layout.store());
}

inline void cmd_ingest(CommandContext& ctx) {
  const auto& c = ctx.config;
  const RunLayout layout = ctx.layout();
  const fs::path corpus = c.resolve(require_path(c.corpus, "paths.corpus"));
  require_file(corpus);
  Manifest m("ingest", layout);
  m.input("corpus", corpus);
  auto result = ingest_file(corpus, {c.min_subreddit_posts, c.thread_count()});
  CorpusStore store = std::move(result.store);
  std::size_t bots_removed = 0;
  if (c.bot_list) {
    const fs::path bots = c.resolve(*c.bot_list);
    require_file(bots);
    m.input("bot_list", bots);
    const auto before = store.size();
    store = filter_known_bots(store, read_id_list(bots));
    bots_removed = before - store.size();
  }
  const auto before_chatty = store.author_count();
  store = filter_top_chatty(store, c.chattiness_fraction);
  m.param("min_subreddit_posts", c.min_subreddit_posts);
  m.param("chattiness_fraction", c.chattiness_fraction);
  save_store(store, layout.store());
  m.output(layout.ingest_report(), to_json(result.report).dump(2) + "\n");
  m.stat("posts", store.size());
  m.stat("authors", store.author_count());
  m.stat("subreddits", store.subreddits().size());
  m.stat("bot_posts_removed", bots_removed);
  m.stat("chatty_authors_removed", before_chatty - store.author_count());
  m.output_file(layout.store() / "posts.jsonl");
  m.output_file(layout.store() / "manifest.json");
  m.write();
  *ctx.log << "ingest: " << store.size() << " posts, " << store.author_count() << " authors\n";
}

inline OverlapOptions overlap_options(const PipelineConfig& c) { return {c.max_user_degree, c.thread_count()}; }

inline void cmd_similarity(CommandContext& ctx) {
  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  Manifest m("similarity", layout);
  m.input("store", layout.store() / "posts.jsonl");
  m.param("max_user_degree", ctx.config.max_user_degree ? json(*ctx.config.max_user_degree) : json(nullptr));
  const auto index = build_user_set_index(store);
  const auto pairs = pairwise_overlap_stats(index, overlap_options(ctx.config));
  m.output(layout.similarity(), serialize_similarity_cache(index, pairs));
  m.stat("subreddits", index.subreddit_count());
  m.stat("pairs", pairs.size());
  m.write();
  *ctx.log << "similarity: " << pairs.size() << " overlapping pairs\n";
}

// Seed set for a demographic: an artifact file (as exported by the
// annotation service) or an inline list.
inline std::set<std::string> resolve_seed_set(const PipelineConfig& c, const RunLayout& layout,
                                              const DemographicConfig& d, Manifest& m) {
  if (!d.seed_subreddits.empty()) {
    m.input_value("seed_set:" + d.name, sha256_hex(json(d.seed_subreddits).dump()));
    return {d.seed_subreddits.begin(), d.seed_subreddits.end()};
  }
  fs::path path = d.seed_set ? c.resolve(*d.seed_set) : layout.annotation_exports() / (slugify(d.name) + ".json");
  require_upstream(path, "annotate-serve");
  m.input("seed_set:" + d.name, path);
  const auto artifact = load_seed_set(path);
  return {artifact.subreddits.begin(), artifact.subreddits.end()};
}

inline double k_for(const PipelineConfig& c, const DemographicConfig& d) { return d.k.value_or(c.groupness_k); }

inline std::string serialize_groupness(const GroupCorpus& corpus, double cutoff) {
  std::string out = "author_id\tscore\tpercentile\tposts\tretained\n";
  for (const auto& u : corpus.users) {
    out += u.author_id + '\t' + format_double(u.score) + '\t' + format_double(u.percentile) + '\t' +
           std::to_string(u.posts) + '\t' + (u.score >= cutoff ? "1" : "0") + '\n';
  }
  return out;
}

struct GroupnessTable {
  std::vector<GroupnessScore> users;
  std::vector<std::string> retained;
};

inline GroupnessTable parse_groupness(std::string_view text) {
  GroupnessTable t;
  const auto lines = split_lines(text);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> cols;
    std::stringstream ss(lines[i]);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 5) throw Error(ErrorKind::parse, "bad group-ness row " + std::to_string(i + 1));
    t.users.push_back({cols[0], std::stod(cols[1]), std::stod(cols[2]), std::stoull(cols[3])});
    if (cols[4] == "1") t.retained.push_back(cols[0]);
  }
  return t;
}

inline void require_demographics(const PipelineConfig& c) {
  if (c.demographics.empty()) throw Error(ErrorKind::invalid_argument, "config lists no demographics");
}

inline void cmd_groupness(CommandContext& ctx) {
  const auto& c = ctx.config;
  require_demographics(c);
  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  Manifest m("groupness", layout);
  m.input("store", layout.store() / "posts.jsonl");
  json summary = json::object();
  for (const auto& d : c.demographics) {
    const auto seeds = resolve_seed_set(c, layout, d, m);
    const auto corpus = build_group_corpus(store, d.name, seeds);
    if (corpus.users.empty()) throw Error(ErrorKind::invalid_argument, "seed set of " + d.name + " has no users");
    const double k = k_for(c, d);
    const double cutoff = percentile_cutoff(corpus.users, k);
    m.param("k:" + d.name, k);
    m.output(layout.groupness(d.name), serialize_groupness(corpus, cutoff));
    const auto retained = corpus.retained_authors(cutoff);
    summary[d.name] = {{"users", corpus.users.size()}, {"retained", retained.size()}, {"cutoff", cutoff}, {"k", k}};
    *ctx.log << "groupness: " << d.name << " retained " << retained.size() << " of " << corpus.users.size() << "\n";
  }
  m.output(layout.groupness_summary(), summary.dump(2) + "\n");
  m.write();
}

inline void cmd_self_id(CommandContext& ctx) {
  const auto& c = ctx.config;
  require_demographics(c);
  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  Manifest m("self-id", layout);
  m.input("store", layout.store() / "posts.jsonl");
  m.param("curve_bin_width", c.curve_bin_width);
  std::shared_ptr<ChatModelClient> verifier;
  for (const auto& d : c.demographics) {
    if (!d.phrase_set) continue;
    require_upstream(layout.groupness(d.name), "groupness");
    const fs::path phrase_path = c.resolve(*d.phrase_set);
    require_file(phrase_path);
    m.input("phrase_set:" + d.name, phrase_path);
    m.input("groupness:" + d.name, layout.groupness(d.name));
    const auto phrases = load_phrase_set(phrase_path);
    const auto seeds = resolve_seed_set(c, layout, d, m);
    const auto corpus = build_group_corpus(store, d.name, seeds);
    std::vector<Post> posts;
    posts.reserve(corpus.positions.size());
    for (auto pos : corpus.positions) posts.push_back(store.at(pos));
    const auto candidates = scan_phrases(posts, phrases, c.thread_count());
    if (!verifier) {
      const auto& endpoint = c.verifier ? c.verifier : c.cm;
      verifier = ctx.client(endpoint, "verifier");
      m.param("verifier_model", verifier->model_name());
    }
    const auto verdicts = verify_candidates(candidates, store, *verifier, phrases, {c.in_flight});
    std::string lines;
    std::size_t indeterminate = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (verdicts[i] == Verification::indeterminate) ++indeterminate;
      lines += json{{"post_id", candidates[i].post_id},
                    {"author_id", candidates[i].author_id},
                    {"phrase", candidates[i].phrase},
                    {"kind", to_string(candidates[i].kind)},
                    {"verification", to_string(verdicts[i])}}
                   .dump() +
               "\n";
    }
    m.output(layout.selfid_candidates(d.name), lines);
    const auto curve = membership_curve(curve_users(corpus, candidates, verdicts), c.curve_bin_width);
    m.output(layout.selfid_curve(d.name), serialize_curve(curve));
    m.stat("candidates:" + d.name, candidates.size());
    m.stat("indeterminate:" + d.name, indeterminate);
    *ctx.log << "self-id: " << d.name << " " << candidates.size() << " candidates\n";
  }
  m.write();
}

inline void cmd_topics(CommandContext& ctx) {
  const auto& c = ctx.config;
  require_demographics(c);
  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  const fs::path spec_path = c.resolve(require_path(c.topic_specs, "paths.topic_specs"));
  require_file(spec_path);
  const auto specs = load_topic_specs(spec_path);
  Manifest m("topics", layout);
  m.input("store", layout.store() / "posts.jsonl");
  m.input("topic_specs", spec_path);
  m.param("bm25_k1", c.bm25.k1);
  m.param("bm25_b", c.bm25.b);
  m.param("retrieve_limit", c.retrieve_limit);
  m.param("drop_fraction", c.drop_fraction);

  std::map<std::string, Bm25Index> indexes;
  for (const auto& d : c.demographics) {
    require_upstream(layout.groupness(d.name), "groupness");
    m.input("groupness:" + d.name, layout.groupness(d.name));
    const auto table = parse_groupness(read_file(layout.groupness(d.name)));
    std::vector<Post> posts;
    for (const auto& author : table.retained) {
      for (auto pos : store.posts_by_author(author)) posts.push_back(store.at(pos));
    }
    if (posts.empty()) throw Error(ErrorKind::invalid_argument, "no retained posts for " + d.name);
    indexes.emplace(d.name, Bm25Index(posts, c.bm25, c.thread_count()));
  }
  std::vector<std::map<std::string, TopicSplit>> per_topic(specs.size());
  parallel_for(specs.size(), c.thread_count(), [&](std::size_t t) {
    std::map<std::string, std::vector<SplitEntry>> retrieved;
    for (const auto& [demo, index] : indexes) retrieved[demo] = retrieve(index, specs[t], c.retrieve_limit);
    per_topic[t] = pool_and_filter(retrieved, specs[t].topic, c.drop_fraction);
  });
  json summary = json::array();
  for (std::size_t t = 0; t < specs.size(); ++t) {
    json counts = json::object();
    double cutoff = 0.0;
    for (const auto& [demo, split] : per_topic[t]) {
      m.output(layout.topic_split(specs[t].topic, demo), serialize_split(split));
      counts[demo] = split.entries.size();
      cutoff = split.cutoff;
    }
    summary.push_back({{"topic", specs[t].topic}, {"category", specs[t].category}, {"cutoff", cutoff}, {"counts", counts}});
  }
  m.output(layout.topics_summary(), summary.dump(2) + "\n");
  m.write();
  *ctx.log << "topics: " << specs.size() << " topics split\n";
}

inline json meta_record(const TaskInstance& inst, const std::string& category) {
  return json{{"instance_id", inst.instance_id},
              {"demo_a", inst.demo_a},
              {"demo_b", inst.demo_b},
              {"topic", inst.topic},
              {"category", category}};
}

inline std::map<std::string, InstanceMeta> parse_metadata(std::string_view text) {
  std::map<std::string, InstanceMeta> out;
  for (const auto& line : split_lines(text)) {
    if (trim(line).empty()) continue;
    const auto j = json::parse(line);
    out[j.at("instance_id")] = {j.at("demo_a"), j.at("demo_b"), j.at("topic"), j.at("category")};
  }
  return out;
}

// Unordered demographic pairs in name order, so each pair appears once
// with demo_a < demo_b.
inline std::vector<std::pair<std::string, std::string>> demographic_pairs(const PipelineConfig& c) {
  std::vector<std::string> names;
  for (const auto& d : c.demographics) names.push_back(d.name);
  std::sort(names.begin(), names.end());
  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) pairs.emplace_back(names[i], names[j]);
  }
  return pairs;
}

inline void cmd_sample(CommandContext& ctx) {
  const auto& c = ctx.config;
  require_demographics(c);
  const RunLayout layout = ctx.layout();
  const auto store = load_run_store(layout);
  require_upstream(layout.topics_summary(), "topics");
  const fs::path spec_path = c.resolve(require_path(c.topic_specs, "paths.topic_specs"));
  const auto specs = load_topic_specs(spec_path);
  Manifest m("sample", layout);
  m.input("store", layout.store() / "posts.jsonl");
  m.input("topics_summary", layout.topics_summary());
  m.param("n", c.n);
  m.param("seed", c.seed);

  std::vector<TaskInstance> all;
  std::string meta;
  for (const auto& spec : specs) {
    for (const auto& [a, b] : demographic_pairs(c)) {
      auto load = [&](const std::string& demo) {
        const auto path = layout.topic_split(spec.topic, demo);
        require_upstream(path, "topics");
        return parse_split(read_file(path), demo, spec.topic);
      };
      const auto split_a = load(a);
      const auto split_b = load(b);
      const auto seed = derive_seed(c.seed, a + "\n" + b + "\n" + spec.topic);
      for (auto& inst : make_instances(split_a, split_b, store, c.n, seed)) {
        meta += meta_record(inst, spec.category).dump() + "\n";
        all.push_back(std::move(inst));
      }
    }
  }
  const auto files = serialize_dataset(all);
  m.output(layout.payload(), files.payload);
  m.output(layout.key(), files.key);
  m.output(layout.instance_meta(), meta);
  m.stat("instances", all.size());
  m.write();
  *ctx.log << "sample: " << all.size() << " instances\n";
}

inline std::vector<TaskInstance> load_run_dataset(const RunLayout& layout) {
  require_upstream(layout.payload(), "sample");
  require_upstream(layout.key(), "sample");
  return load_dataset(layout.payload(), layout.key());
}

// Exit status 3 is reserved for runs where the model endpoint was never
// reachable; scattered failures are recorded per instance instead.
struct ModelRunStats {
  std::size_t total = 0;
  std::size_t transport_failures = 0;
  bool endpoint_unreachable() const { return total > 0 && transport_failures == total; }
};

inline ModelRunStats cmd_theorize(CommandContext& ctx) {
  const auto& c = ctx.config;
  const RunLayout layout = ctx.layout();
  const auto instances = load_run_dataset(layout);
  auto tm = ctx.client(c.tm, "tm");
  Manifest m("theorize", layout);
  m.input("payload", layout.payload());
  m.param("tm_model", tm->model_name());
  std::vector<TheoryRecord> records(instances.size());
  parallel_for(instances.size(), c.in_flight, [&](std::size_t i) { records[i] = theorize(instances[i], *tm); });
  std::string out;
  ModelRunStats stats{instances.size(), 0};
  std::size_t parse_failures = 0;
  for (const auto& r : records) {
    if (r.status == EvalStatus::tm_transport) ++stats.transport_failures;
    if (r.status == EvalStatus::tm_parse) ++parse_failures;
    out += to_json(r).dump() + "\n";
  }
  m.output(layout.theories(), out);
  m.stat("instances", instances.size());
  m.stat("tm_transport_failures", stats.transport_failures);
  m.stat("tm_parse_failures", parse_failures);
  m.write();
  *ctx.log << "theorize: " << instances.size() - stats.transport_failures - parse_failures << " of "
           << instances.size() << " theories parsed\n";
  return stats;
}

inline std::map<std::string, TheoryRecord> load_theories(const fs::path& path) {
  std::map<std::string, TheoryRecord> out;
  for (const auto& line : split_lines(read_file(path))) {
    if (trim(line).empty()) continue;
    auto r = theory_record_from_json(json::parse(line));
    out.emplace(r.instance_id, std::move(r));
  }
  return out;
}

inline json evaluation_summary(const Evaluation& ev) {
  std::map<std::string, std::size_t> by_status;
  for (const auto& r : ev.results) ++by_status[to_string(r.status)];
  return json{{"overall_accuracy", ev.overall_accuracy ? json(*ev.overall_accuracy) : json(nullptr)},
              {"scored", ev.scored},
              {"correct", ev.correct},
              {"failed", ev.failed},
              {"by_status", by_status}};
}

inline ModelRunStats cmd_evaluate(CommandContext& ctx) {
  const auto& c = ctx.config;
  const RunLayout layout = ctx.layout();
  const auto instances = load_run_dataset(layout);
  require_upstream(layout.theories(), "theorize");
  const auto theories = load_theories(layout.theories());
  auto cm = ctx.client(c.cm, "cm");
  Manifest m("evaluate", layout);
  m.input("payload", layout.payload());
  m.input("key", layout.key());
  m.input("theories", layout.theories());
  m.param("cm_model", cm->model_name());
  std::vector<EvalResult> results(instances.size());
  parallel_for(instances.size(), c.in_flight, [&](std::size_t i) {
    auto it = theories.find(instances[i].instance_id);
    if (it == theories.end()) {
      throw Error(ErrorKind::consistency, "no theory for instance " + instances[i].instance_id);
    }
    results[i] = score_theory_record(instances[i], it->second, *cm);
  });
  const auto ev = summarize(std::move(results));
  std::string out;
  ModelRunStats stats;
  for (const auto& r : ev.results) {
    out += to_json(r).dump() + "\n";
    if (r.status == EvalStatus::cm_transport) ++stats.transport_failures;
    if (r.status != EvalStatus::tm_transport && r.status != EvalStatus::tm_parse) ++stats.total;
  }
  m.output(layout.results(), out);
  const auto summary = evaluation_summary(ev);
  m.output(layout.eval_summary(), summary.dump(2) + "\n");
  m.stat("summary", summary);
  m.write();
  *ctx.log << "evaluate: accuracy "
           << (ev.overall_accuracy ? format_percent(*ev.overall_accuracy) + "%" : std::string("n/a")) << " over "
           << ev.scored << " scored, " << ev.failed << " failed\n";
  return stats;
}

inline std::vector<EvalResult> load_results(const fs::path& path) {
  std::vector<EvalResult> out;
  for (const auto& line : split_lines(read_file(path))) {
    if (trim(line).empty()) continue;
    out.push_back(eval_result_from_json(json::parse(line)));
  }
  return out;
}

inline void cmd_report(CommandContext& ctx) {
  const RunLayout layout = ctx.layout();
  require_upstream(layout.results(), "evaluate");
  require_upstream(layout.instance_meta(), "sample");
  const auto results = load_results(layout.results());
  const auto meta = parse_metadata(read_file(layout.instance_meta()));
  Manifest m("report", layout);
  m.input("results", layout.results());
  m.input("metadata", layout.instance_meta());
  json summary;
  const auto ev = summarize(results);
  summary["overall_accuracy"] = ev.overall_accuracy ? json(*ev.overall_accuracy) : json(nullptr);
  summary["scored"] = ev.scored;
  summary["failed"] = ev.failed;
  for (auto g : {Grouping::pair, Grouping::demographic, Grouping::category, Grouping::category_demographic}) {
    const auto report = split_report(results, meta, g);
    m.output(layout.report(g), serialize_report(report));
    if (g == Grouping::category) {
      const auto gm = geometric_mean_accuracy(report);
      summary["category_geometric_mean"] = gm ? json(*gm) : json(nullptr);
    }
  }
  m.output(layout.report_summary(), summary.dump(2) + "\n");
  m.write();
  *ctx.log << "report: written to " << (layout.root / "report").string() << "\n";
}

inline ModelRunStats cmd_sweep(CommandContext& ctx) {
  const auto& c = ctx.config;
  const RunLayout layout = ctx.layout();
  auto instances = load_run_dataset(layout);
  if (c.sweep_max_instances > 0 && instances.size() > c.sweep_max_instances) {
    instances.resize(c.sweep_max_instances);
  }
  for (auto n : c.sweep_n) {
    for (const auto& inst : instances) {
      if (n > inst.calibration.size()) {
        throw Error(ErrorKind::invalid_argument, "sweep n=" + std::to_string(n) + " exceeds the dataset's calibration size");
      }
    }
  }
  auto tm = ctx.client(c.tm, "tm");
  auto cm = ctx.client(c.cm, "cm");
  Manifest m("sweep", layout);
  m.input("payload", layout.payload());
  m.input("key", layout.key());
  m.param("sweep_n", c.sweep_n);
  m.param("sweep_max_instances", c.sweep_max_instances);
  m.param("seed", c.seed);
  m.param("tm_model", tm->model_name());
  m.param("cm_model", cm->model_name());
  const auto points = calibration_sweep(instances, c.sweep_n, *tm, *cm, c.seed, {c.in_flight});
  std::string out = "n\taccuracy\tscored\tfailed\n";
  ModelRunStats stats;
  for (const auto& p : points) {
    out += std::to_string(p.n) + '\t' + (p.accuracy ? format_double(*p.accuracy) : std::string("NA")) + '\t' +
           std::to_string(p.scored) + '\t' + std::to_string(p.failed) + '\n';
    stats.total += p.scored + p.failed;
    stats.transport_failures += p.failed;
  }
  m.output(layout.sweep(), out);
  m.write();
  *ctx.log << "sweep: " << points.size() << " calibration sizes\n";
  // Failed sweep points mix parse and transport errors, so only a sweep
  // with nothing scored is reported as an endpoint failure.
  if (stats.transport_failures != stats.total) stats.transport_failures = 0;
  return stats;
}

inline void cmd_humanval(CommandContext& ctx, const AggregateOptions& options = {}) {
  const auto& c = ctx.config;
  const RunLayout layout = ctx.layout();
  const fs::path path = c.resolve(require_path(c.annotations, "paths.annotations"));
  require_file(path);
  Manifest m("humanval", layout);
  m.input("annotations", path);
  m.param("tie_rule", options.tie == TieRule::loss ? "loss" : "win");
  m.param("raw_sheet_scores", options.raw_sheet_scores);
  const auto table = score_annotations(parse_annotation_csv(read_file(path)), options);
  m.output(layout.humanval(), serialize_dimension_table(table));
  m.write();
  *ctx.log << "humanval: " << table.values.size() << " models scored\n";
}

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::upstream_missing: return 2;
    case ErrorKind::transport: return 3;
    default: return 1;
  }
}

}  // namespace splits
