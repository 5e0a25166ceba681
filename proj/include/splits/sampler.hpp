#pragma once

// Task instance generation: per iteration, n/2 calibration posts and 3
// evaluation posts are drawn from each group's topic pool without
// replacement until either pool runs short.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splits/common.hpp"
#include "splits/corpus.hpp"
#include "splits/topicsplit.hpp"

namespace splits {

inline constexpr std::size_t kEvalSetSize = 3;

enum class Gold { set1_is_a, set2_is_a };

inline const char* to_string(Gold g) { return g == Gold::set1_is_a ? "set1" : "set2"; }

inline Gold parse_gold(std::string_view s) {
  if (s == "set1") return Gold::set1_is_a;
  if (s == "set2") return Gold::set2_is_a;
  throw Error(ErrorKind::parse, "gold must be set1 or set2");
}

enum class Side { a, b };

// An anonymized post: the text body only, plus the provenance the payload
// never exposes.
struct InstancePost {
  std::string post_id;
  std::string text;
  Side group = Side::a;

  friend bool operator==(const InstancePost&, const InstancePost&) = default;
};

struct TaskInstance {
  std::string instance_id;
  std::string demo_a;
  std::string demo_b;
  std::string topic;
  std::vector<InstancePost> calibration;
  std::vector<InstancePost> set1;
  std::vector<InstancePost> set2;
  Gold gold = Gold::set1_is_a;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;

  static std::vector<std::string> texts(const std::vector<InstancePost>& posts) {
    std::vector<std::string> out;
    out.reserve(posts.size());
    for (const auto& p : posts) out.push_back(p.text);
    return out;
  }
};

inline std::size_t posts_per_iteration(std::size_t n) { return n / 2 + kEvalSetSize; }

inline void check_calibration_size(std::size_t n) {
  if (n < 2 || n % 2 != 0) throw Error(ErrorKind::invalid_argument, "calibration size must be even and >= 2");
}

inline std::string make_instance_id(const std::string& demo_a, const std::string& demo_b, const std::string& topic,
                                    std::size_t i) {
  std::ostringstream out;
  out << slugify(demo_a) << "__" << slugify(demo_b) << "__" << slugify(topic) << "__" << std::setw(5)
      << std::setfill('0') << i;
  return out.str();
}

// Core sampler over already-materialized pools. Calibration is drawn first,
// then the evaluation sets; a fair coin from the same stream decides which
// evaluation set is group A's.
inline std::vector<TaskInstance> make_instances(std::vector<InstancePost> pool_a, std::vector<InstancePost> pool_b,
                                                const std::string& demo_a, const std::string& demo_b,
                                                const std::string& topic, std::size_t n, std::uint64_t seed) {
  check_calibration_size(n);
  for (auto& p : pool_a) p.group = Side::a;
  for (auto& p : pool_b) p.group = Side::b;
  // Canonical starting order so results depend only on pool contents.
  auto by_id = [](const InstancePost& x, const InstancePost& y) { return x.post_id < y.post_id; };
  std::sort(pool_a.begin(), pool_a.end(), by_id);
  std::sort(pool_b.begin(), pool_b.end(), by_id);

  Rng rng(seed);
  const std::size_t half = n / 2;
  const std::size_t need = posts_per_iteration(n);
  std::vector<TaskInstance> out;
  while (pool_a.size() >= need && pool_b.size() >= need) {
    TaskInstance inst;
    inst.instance_id = make_instance_id(demo_a, demo_b, topic, out.size());
    inst.demo_a = demo_a;
    inst.demo_b = demo_b;
    inst.topic = topic;
    inst.calibration = draw_without_replacement(pool_a, half, rng);
    auto from_b = draw_without_replacement(pool_b, half, rng);
    inst.calibration.insert(inst.calibration.end(), from_b.begin(), from_b.end());
    shuffle_in_place(inst.calibration, rng);
    auto eval_a = draw_without_replacement(pool_a, kEvalSetSize, rng);
    auto eval_b = draw_without_replacement(pool_b, kEvalSetSize, rng);
    if (fair_coin(rng)) {
      inst.set1 = std::move(eval_a);
      inst.set2 = std::move(eval_b);
      inst.gold = Gold::set1_is_a;
    } else {
      inst.set1 = std::move(eval_b);
      inst.set2 = std::move(eval_a);
      inst.gold = Gold::set2_is_a;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<InstancePost> pool_from_split(const TopicSplit& split, const CorpusStore& store) {
  std::vector<InstancePost> pool;
  pool.reserve(split.entries.size());
  for (const auto& e : split.entries) {
    const Post* p = store.find(e.post_id);
    if (!p) throw Error(ErrorKind::consistency, "split references unknown post " + e.post_id);
    pool.push_back({p->post_id, p->text, Side::a});
  }
  return pool;
}

inline std::vector<TaskInstance> make_instances(const TopicSplit& split_a, const TopicSplit& split_b,
                                                const CorpusStore& store, std::size_t n, std::uint64_t seed) {
  if (split_a.topic != split_b.topic) throw Error(ErrorKind::invalid_argument, "splits cover different topics");
  return make_instances(pool_from_split(split_a, store), pool_from_split(split_b, store), split_a.demographic,
                        split_b.demographic, split_a.topic, n, seed);
}

// Re-draws a smaller calibration set for the same instance: n/2 posts per
// group taken from the instance's own calibration posts, evaluation sets
// untouched. Used for calibration-size sweeps over fixed instances.
inline TaskInstance resample_calibration(const TaskInstance& inst, std::size_t n, std::uint64_t seed) {
  check_calibration_size(n);
  std::vector<InstancePost> a;
  std::vector<InstancePost> b;
  for (const auto& p : inst.calibration) (p.group == Side::a ? a : b).push_back(p);
  if (n / 2 > a.size() || n / 2 > b.size()) {
    throw Error(ErrorKind::invalid_argument, "instance " + inst.instance_id + " has fewer than n/2 calibration posts per group");
  }
  Rng rng(derive_seed(seed, inst.instance_id + "#" + std::to_string(n)));
  TaskInstance out = inst;
  out.calibration = draw_without_replacement(a, n / 2, rng);
  auto from_b = draw_without_replacement(b, n / 2, rng);
  out.calibration.insert(out.calibration.end(), from_b.begin(), from_b.end());
  shuffle_in_place(out.calibration, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files: a label-free payload and a separate key file.

inline json payload_record(const TaskInstance& inst) {
  return json{{"instance_id", inst.instance_id},
              {"demo_a", inst.demo_a},
              {"demo_b", inst.demo_b},
              {"topic", inst.topic},
              {"calibration", TaskInstance::texts(inst.calibration)},
              {"set1", TaskInstance::texts(inst.set1)},
              {"set2", TaskInstance::texts(inst.set2)}};
}

inline json key_record(const TaskInstance& inst) {
  auto ids = [](const std::vector<InstancePost>& posts) {
    json a = json::array();
    for (const auto& p : posts) a.push_back(p.post_id);
    return a;
  };
  auto groups = [](const std::vector<InstancePost>& posts) {
    std::string s;
    for (const auto& p : posts) s.push_back(p.group == Side::a ? 'A' : 'B');
    return s;
  };
  return json{{"instance_id", inst.instance_id},
              {"gold", to_string(inst.gold)},
              {"calibration_post_ids", ids(inst.calibration)},
              {"calibration_groups", groups(inst.calibration)},
              {"set1_post_ids", ids(inst.set1)},
              {"set2_post_ids", ids(inst.set2)}};
}

struct DatasetFiles {
  std::string payload;
  std::string key;
};

inline DatasetFiles serialize_dataset(const std::vector<TaskInstance>& instances) {
  DatasetFiles files;
  for (const auto& inst : instances) {
    files.payload += payload_record(inst).dump() + "\n";
    files.key += key_record(inst).dump() + "\n";
  }
  return files;
}

inline void export_dataset(const std::vector<TaskInstance>& instances, const std::filesystem::path& payload_path,
                           const std::filesystem::path& key_path) {
  const auto files = serialize_dataset(instances);
  write_file(payload_path, files.payload);
  write_file(key_path, files.key);
}

inline std::vector<TaskInstance> parse_dataset(std::string_view payload, std::string_view key) {
  std::map<std::string, json> keys;
  for (const auto& line : split_lines(key)) {
    if (trim(line).empty()) continue;
    auto j = json::parse(line);
    keys.emplace(j.at("instance_id").get<std::string>(), std::move(j));
  }
  std::vector<TaskInstance> out;
  for (const auto& line : split_lines(payload)) {
    if (trim(line).empty()) continue;
    const auto p = json::parse(line);
    TaskInstance inst;
    inst.instance_id = p.at("instance_id");
    inst.demo_a = p.at("demo_a");
    inst.demo_b = p.at("demo_b");
    inst.topic = p.at("topic");
    auto it = keys.find(inst.instance_id);
    if (it == keys.end()) throw Error(ErrorKind::consistency, "no key record for " + inst.instance_id);
    const json& k = it->second;
    inst.gold = parse_gold(k.at("gold").get<std::string>());
    auto join = [](const json& texts, const json& ids, const std::string& groups) {
      if (texts.size() != ids.size() || (!groups.empty() && groups.size() != texts.size())) {
        throw Error(ErrorKind::consistency, "payload/key length mismatch");
      }
      std::vector<InstancePost> posts;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        posts.push_back({ids[i].get<std::string>(), texts[i].get<std::string>(),
                         !groups.empty() && groups[i] == 'B' ? Side::b : Side::a});
      }
      return posts;
    };
    inst.calibration = join(p.at("calibration"), k.at("calibration_post_ids"), k.value("calibration_groups", std::string{}));
    const std::string set1_groups(p.at("set1").size(), inst.gold == Gold::set1_is_a ? 'A' : 'B');
    const std::string set2_groups(p.at("set2").size(), inst.gold == Gold::set1_is_a ? 'B' : 'A');
    inst.set1 = join(p.at("set1"), k.at("set1_post_ids"), set1_groups);
    inst.set2 = join(p.at("set2"), k.at("set2_post_ids"), set2_groups);
    out.push_back(std::move(inst));
  }
  return out;
}

inline std::vector<TaskInstance> load_dataset(const std::filesystem::path& payload_path,
                                              const std::filesystem::path& key_path) {
  return parse_dataset(read_file(payload_path), read_file(key_path));
}

}  // namespace splits
