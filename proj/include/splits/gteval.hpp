#pragma once

// Group theorization loop: theory generation by a theory model, fixed
// classification-based scoring, and accuracy analytics over the results.

#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/chat.hpp"
#include "splits/common.hpp"
#include "splits/prompts.hpp"
#include "splits/sampler.hpp"

namespace splits {

inline constexpr std::size_t kTheoryPairs = 3;

struct FeaturePair {
  std::string feature_a;
  std::string feature_b;

  friend bool operator==(const FeaturePair&, const FeaturePair&) = default;
};

struct Theory {
  std::vector<FeaturePair> pairs;
  std::string raw_text;

  friend bool operator==(const Theory&, const Theory&) = default;
};

// Extracts "Group A: ...; Group B ..." lines. Exactly three are required.
inline Theory parse_theory(const std::string& raw) {
  static const std::regex kPair(R"(^[^A-Za-z]*group a[*\s]*:\s*(.*?)\s*;[*\s]*group b[*\s]*:?\s*(.*?)\s*$)",
                                std::regex::icase | std::regex::ECMAScript);
  Theory theory;
  theory.raw_text = raw;
  for (const auto& line : split_lines(raw)) {
    std::smatch m;
    if (!std::regex_match(line, m, kPair)) continue;
    std::string a = m[1].str();
    std::string b = m[2].str();
    auto strip = [](std::string& s) {
      while (!s.empty() && (s.back() == '*' || s.back() == ' ')) s.pop_back();
      while (!s.empty() && (s.front() == '*' || s.front() == ' ')) s.erase(s.begin());
    };
    strip(a);
    strip(b);
    if (a.empty() || b.empty()) continue;
    theory.pairs.push_back({std::move(a), std::move(b)});
  }
  if (theory.pairs.size() != kTheoryPairs) {
    throw Error(ErrorKind::parse, "expected 3 contrastive pairs, found " + std::to_string(theory.pairs.size()));
  }
  return theory;
}

inline std::string format_guidelines(const Theory& theory) {
  std::string out;
  for (std::size_t i = 0; i < theory.pairs.size(); ++i) {
    if (i) out += '\n';
    out += "Group A: " + theory.pairs[i].feature_a + "; Group B: " + theory.pairs[i].feature_b;
  }
  return out;
}

inline std::string render_theory_prompt(const TaskInstance& inst) {
  return prompts::render_theory_prompt(inst.demo_a, inst.demo_b, inst.topic, TaskInstance::texts(inst.calibration));
}

inline std::string render_classification_prompt(const TaskInstance& inst, const Theory& theory) {
  return prompts::render_classification_prompt(inst.demo_a, inst.demo_b, TaskInstance::texts(inst.set1),
                                               TaskInstance::texts(inst.set2), format_guidelines(theory));
}

inline Theory generate_theory(const TaskInstance& inst, ChatModelClient& tm) {
  if (inst.calibration.empty()) throw Error(ErrorKind::invalid_argument, "empty calibration set");
  return parse_theory(tm.complete(render_theory_prompt(inst)));
}

// The labelled "Post Set N: A|B" lines of a classification response; the
// last occurrence of each wins, so a leading explanation is ignored.
struct ClassificationAnswer {
  Side set1;
  Side set2;
};

inline ClassificationAnswer parse_classification(const std::string& raw) {
  static const std::regex kLine(R"(post set\s*([12])\s*:\s*[*\s]*(?:group\s+)?([ab])\b)",
                                std::regex::icase | std::regex::ECMAScript);
  std::optional<Side> set1;
  std::optional<Side> set2;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), kLine); it != std::sregex_iterator(); ++it) {
    const Side side = (*it)[2].str() == "A" || (*it)[2].str() == "a" ? Side::a : Side::b;
    ((*it)[1].str() == "1" ? set1 : set2) = side;
  }
  if (!set1 || !set2) throw Error(ErrorKind::parse, "classification response lacks both post set lines");
  if (*set1 == *set2) throw Error(ErrorKind::parse, "classification assigns both sets to the same group");
  return {*set1, *set2};
}

enum class EvalStatus { ok, tm_transport, tm_parse, cm_transport, cm_parse };

inline const char* to_string(EvalStatus s) {
  switch (s) {
    case EvalStatus::ok: return "ok";
    case EvalStatus::tm_transport: return "tm_transport";
    case EvalStatus::tm_parse: return "tm_parse";
    case EvalStatus::cm_transport: return "cm_transport";
    case EvalStatus::cm_parse: return "cm_parse";
  }
  return "ok";
}

inline EvalStatus parse_eval_status(std::string_view s) {
  for (auto v : {EvalStatus::ok, EvalStatus::tm_transport, EvalStatus::tm_parse, EvalStatus::cm_transport,
                 EvalStatus::cm_parse}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorKind::parse, "unknown eval status " + std::string(s));
}

struct EvalResult {
  std::string instance_id;
  EvalStatus status = EvalStatus::ok;
  std::optional<Theory> theory;
  std::string tm_response;
  std::optional<Side> predicted_set1;  // the group the CM assigned to set 1
  int correct = 0;
  std::string transcript;  // CM raw response
  std::string error;

  bool scored() const { return status == EvalStatus::ok; }
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

// Scores one instance against its gold matching.
inline EvalResult classify(const TaskInstance& inst, const Theory& theory, ChatModelClient& cm) {
  EvalResult r;
  r.instance_id = inst.instance_id;
  r.theory = theory;
  try {
    r.transcript = cm.complete(render_classification_prompt(inst, theory));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::transport) throw;
    r.status = EvalStatus::cm_transport;
    r.error = e.what();
    return r;
  }
  try {
    const auto answer = parse_classification(r.transcript);
    r.predicted_set1 = answer.set1;
    const Side gold_set1 = inst.gold == Gold::set1_is_a ? Side::a : Side::b;
    r.correct = answer.set1 == gold_set1 ? 1 : 0;
  } catch (const Error& e) {
    r.status = EvalStatus::cm_parse;
    r.error = e.what();
  }
  return r;
}

struct TheoryRecord {
  std::string instance_id;
  EvalStatus status = EvalStatus::ok;  // ok, tm_transport or tm_parse
  std::optional<Theory> theory;
  std::string raw;
  std::string error;
};

inline TheoryRecord theorize(const TaskInstance& inst, ChatModelClient& tm) {
  TheoryRecord rec;
  rec.instance_id = inst.instance_id;
  try {
    rec.raw = tm.complete(render_theory_prompt(inst));
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::transport) throw;
    rec.status = EvalStatus::tm_transport;
    rec.error = e.what();
    return rec;
  }
  try {
    rec.theory = parse_theory(rec.raw);
  } catch (const Error& e) {
    rec.status = EvalStatus::tm_parse;
    rec.error = e.what();
  }
  return rec;
}

inline EvalResult score_theory_record(const TaskInstance& inst, const TheoryRecord& rec, ChatModelClient& cm) {
  if (rec.status != EvalStatus::ok || !rec.theory) {
    EvalResult r;
    r.instance_id = inst.instance_id;
    r.status = rec.status == EvalStatus::ok ? EvalStatus::tm_parse : rec.status;
    r.tm_response = rec.raw;
    r.error = rec.error;
    return r;
  }
  auto r = classify(inst, *rec.theory, cm);
  r.tm_response = rec.raw;
  return r;
}

struct EvaluateOptions {
  unsigned in_flight = 8;
};

struct Evaluation {
  std::optional<double> overall_accuracy;  // absent when nothing was scored
  std::size_t scored = 0;
  std::size_t correct = 0;
  std::size_t failed = 0;
  std::vector<EvalResult> results;  // instance order
};

inline Evaluation summarize(std::vector<EvalResult> results) {
  Evaluation ev;
  for (const auto& r : results) {
    if (r.scored()) {
      ++ev.scored;
      ev.correct += static_cast<std::size_t>(r.correct);
    } else {
      ++ev.failed;
    }
  }
  if (ev.scored > 0) ev.overall_accuracy = static_cast<double>(ev.correct) / static_cast<double>(ev.scored);
  ev.results = std::move(results);
  return ev;
}

// Failed instances are reported in `failed`, never counted as wrong.
inline Evaluation evaluate(const std::vector<TaskInstance>& instances, ChatModelClient& tm, ChatModelClient& cm,
                           const EvaluateOptions& options = {}) {
  std::vector<EvalResult> results(instances.size());
  parallel_for(instances.size(), options.in_flight, [&](std::size_t i) {
    results[i] = score_theory_record(instances[i], theorize(instances[i], tm), cm);
  });
  return summarize(std::move(results));
}

// ---------------------------------------------------------------------------
// Split analytics

struct InstanceMeta {
  std::string demo_a;
  std::string demo_b;
  std::string topic;
  std::string category;
};

enum class Grouping { pair, demographic, category, category_demographic };

inline const char* to_string(Grouping g) {
  switch (g) {
    case Grouping::pair: return "pair";
    case Grouping::demographic: return "demographic";
    case Grouping::category: return "category";
    case Grouping::category_demographic: return "category_demographic";
  }
  return "pair";
}

// Partition groupings assign each instance to one row; the demographic
// groupings count it under both of its demographics.
inline bool is_partition(Grouping g) { return g == Grouping::pair || g == Grouping::category; }

struct ReportRow {
  std::string key;
  std::size_t total = 0;
  std::size_t correct = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct SplitReport {
  Grouping grouping = Grouping::pair;
  std::vector<ReportRow> rows;  // sorted by key

  const ReportRow* find(const std::string& key) const {
    for (const auto& r : rows) {
      if (r.key == key) return &r;
    }
    return nullptr;
  }
};

inline std::string pair_key(const std::string& a, const std::string& b) {
  return a < b ? a + " | " + b : b + " | " + a;
}

inline std::vector<std::string> grouping_keys(const InstanceMeta& m, Grouping g) {
  switch (g) {
    case Grouping::pair: return {pair_key(m.demo_a, m.demo_b)};
    case Grouping::demographic: return {m.demo_a, m.demo_b};
    case Grouping::category: return {m.category};
    case Grouping::category_demographic: return {m.category + " | " + m.demo_a, m.category + " | " + m.demo_b};
  }
  return {};
}

// Only scored results enter the report.
inline SplitReport split_report(const std::vector<EvalResult>& results,
                                const std::map<std::string, InstanceMeta>& metadata, Grouping grouping) {
  std::map<std::string, ReportRow> rows;
  for (const auto& r : results) {
    if (!r.scored()) continue;
    auto it = metadata.find(r.instance_id);
    if (it == metadata.end()) throw Error(ErrorKind::consistency, "result without metadata: " + r.instance_id);
    for (const auto& key : grouping_keys(it->second, grouping)) {
      auto& row = rows[key];
      row.key = key;
      ++row.total;
      row.correct += static_cast<std::size_t>(r.correct);
    }
  }
  SplitReport report{grouping, {}};
  for (auto& [_, row] : rows) report.rows.push_back(std::move(row));
  return report;
}

// Total-weighted mean of row accuracies.
inline double weighted_accuracy(const SplitReport& report) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& r : report.rows) {
    num += static_cast<double>(r.total) * r.accuracy();
    den += static_cast<double>(r.total);
  }
  return den == 0.0 ? 0.0 : num / den;
}

// (prod accuracies)^(1/rows); absent if any row is at zero or there are
// no rows.
inline std::optional<double> geometric_mean_accuracy(const SplitReport& report) {
  if (report.rows.empty()) return std::nullopt;
  double log_sum = 0.0;
  for (const auto& r : report.rows) {
    const double a = r.accuracy();
    if (!(a > 0.0)) return std::nullopt;
    log_sum += std::log(a);
  }
  return std::exp(log_sum / static_cast<double>(report.rows.size()));
}

inline std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * fraction);
  return buf;
}

inline std::string serialize_report(const SplitReport& report) {
  std::string out = "key\ttotal\tcorrect\taccuracy_pct\n";
  for (const auto& r : report.rows) {
    out += r.key + '\t' + std::to_string(r.total) + '\t' + std::to_string(r.correct) + '\t' + format_percent(r.accuracy()) +
           '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration-size sweep

struct SweepPoint {
  std::size_t n = 0;
  std::optional<double> accuracy;
  std::size_t scored = 0;
  std::size_t failed = 0;
};

// The same instances at every n: evaluation sets fixed, calibration
// re-drawn as n/2 posts per group from each instance's own calibration.
// Wrap the clients in CachingClient to make re-runs incremental.
inline std::vector<SweepPoint> calibration_sweep(const std::vector<TaskInstance>& base_instances,
                                                 const std::vector<std::size_t>& n_values, ChatModelClient& tm,
                                                 ChatModelClient& cm, std::uint64_t seed,
                                                 const EvaluateOptions& options = {}) {
  std::vector<SweepPoint> out;
  for (const auto n : n_values) {
    std::vector<TaskInstance> at_n;
    at_n.reserve(base_instances.size());
    for (const auto& inst : base_instances) {
      at_n.push_back(inst.calibration.size() == n ? inst : resample_calibration(inst, n, seed));
    }
    const auto ev = evaluate(at_n, tm, cm, options);
    out.push_back({n, ev.overall_accuracy, ev.scored, ev.failed});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record formats

inline json to_json(const Theory& t) {
  json pairs = json::array();
  for (const auto& p : t.pairs) pairs.push_back({{"group_a", p.feature_a}, {"group_b", p.feature_b}});
  return json{{"pairs", pairs}, {"raw_text", t.raw_text}};
}

inline Theory theory_from_json(const json& j) {
  Theory t;
  for (const auto& p : j.at("pairs")) t.pairs.push_back({p.at("group_a"), p.at("group_b")});
  t.raw_text = j.value("raw_text", std::string{});
  return t;
}

inline json to_json(const TheoryRecord& r) {
  return json{{"instance_id", r.instance_id},
              {"status", to_string(r.status)},
              {"theory", r.theory ? to_json(*r.theory) : json(nullptr)},
              {"raw", r.raw},
              {"error", r.error}};
}

inline TheoryRecord theory_record_from_json(const json& j) {
  TheoryRecord r;
  r.instance_id = j.at("instance_id");
  r.status = parse_eval_status(j.at("status").get<std::string>());
  if (j.contains("theory") && !j["theory"].is_null()) r.theory = theory_from_json(j["theory"]);
  r.raw = j.value("raw", std::string{});
  r.error = j.value("error", std::string{});
  return r;
}

inline json to_json(const EvalResult& r) {
  json predicted = nullptr;
  if (r.predicted_set1) {
    predicted = *r.predicted_set1 == Side::a ? json{{"set1", "A"}, {"set2", "B"}} : json{{"set1", "B"}, {"set2", "A"}};
  }
  return json{{"instance_id", r.instance_id},
              {"status", to_string(r.status)},
              {"theory", r.theory ? to_json(*r.theory) : json(nullptr)},
              {"tm_response", r.tm_response},
              {"predicted", predicted},
              {"correct", r.correct},
              {"transcript", r.transcript},
              {"error", r.error}};
}

inline EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  r.instance_id = j.at("instance_id");
  r.status = parse_eval_status(j.at("status").get<std::string>());
  if (j.contains("theory") && !j["theory"].is_null()) r.theory = theory_from_json(j["theory"]);
  r.tm_response = j.value("tm_response", std::string{});
  if (j.contains("predicted") && !j["predicted"].is_null()) {
    r.predicted_set1 = j["predicted"].at("set1").get<std::string>() == "A" ? Side::a : Side::b;
  }
  r.correct = j.value("correct", 0);
  r.transcript = j.value("transcript", std::string{});
  r.error = j.value("error", std::string{});
  return r;
}

}  // namespace splits
