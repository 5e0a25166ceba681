#include <gtest/gtest.h>

#include "splits/topicsplit.hpp"
#include "test_support.hpp"

using namespace splits;
using splits::testing::post;

namespace {

std::vector<Post> toy_corpus() {
  return {post("d1", "u", "s", "Apple banana apple"), post("d2", "u", "s", "banana, cherry!"),
          post("d3", "u", "s", "cherry cherry CHERRY date"), post("d4", "u", "s", "apple"),
          post("d5", "u", "s", "egg fig")};
}

TopicSpec spec(std::vector<std::string> keywords) {
  return make_topic_spec("Hobbies & Special Interests", "Fruit", keywords);
}

std::vector<SplitEntry> entries(const std::string& prefix, std::vector<double> scores) {
  std::vector<SplitEntry> out;
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({prefix + std::to_string(i), scores[i], 0.0});
  return out;
}

}  // namespace

TEST(TopicSplit, Tokenize) {
  EXPECT_EQ(tokenize("Hello, World! it's 2024"), (std::vector<std::string>{"hello", "world", "it", "s", "2024"}));
  EXPECT_TRUE(tokenize("  ...  ").empty());
}

TEST(TopicSplit, IndexStatistics) {
  auto posts = toy_corpus();
  auto index = build_index(posts);
  EXPECT_EQ(index.document_count(), 5u);
  EXPECT_DOUBLE_EQ(index.average_doc_length(), 12.0 / 5.0);
  EXPECT_EQ(index.document_frequency("apple"), 2u);
  EXPECT_EQ(index.document_frequency("cherry"), 2u);
  EXPECT_EQ(index.document_frequency("banana"), 2u);
  EXPECT_EQ(index.document_frequency("zebra"), 0u);
  EXPECT_EQ(index.term_frequency("d3", "cherry"), 3u);
  EXPECT_EQ(index.doc_length("d3"), 4u);
  EXPECT_EQ(index.doc_length("d2"), 2u);
}

TEST(TopicSplit, SingletonAndDuplicates) {
  std::vector<Post> one = {post("x", "u", "s", "word")};
  auto index = build_index(one);
  EXPECT_EQ(index.average_doc_length(), 1.0);
  EXPECT_EQ(index.document_frequency("word"), 1u);
  std::vector<Post> twins = {post("a", "u", "s", "same text"), post("b", "u", "s", "same text")};
  auto both = build_index(twins);
  EXPECT_EQ(both.document_frequency("same"), 2u);
  auto r = retrieve(both, spec({"same"}));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].bm25_score, r[1].bm25_score);
  EXPECT_EQ(r[0].post_id, "a");
  std::vector<Post> dup = {post("a", "u", "s", "x"), post("a", "v", "s", "y")};
  EXPECT_THROW(build_index(dup), Error);
  EXPECT_THROW(build_index(std::vector<Post>{}), Error);
}

TEST(TopicSplit, ScoresMatchHandEvaluatedFormula) {
  auto posts = toy_corpus();
  auto index = build_index(posts);
  auto r = retrieve(index, spec({"apple", "cherry"}));
  // idf = ln(1 + (5 - 2 + 0.5) / (2 + 0.5)) = ln 2.4 for both terms; avgdl 2.4.
  ASSERT_EQ(r.size(), 4u);
  EXPECT_EQ(r[0].post_id, "d3");
  EXPECT_NEAR(r[0].bm25_score, 1.2037695138616125, 1e-9);
  EXPECT_EQ(r[1].post_id, "d4");
  EXPECT_NEAR(r[1].bm25_score, 1.1498693863752716, 1e-9);
  EXPECT_EQ(r[2].post_id, "d1");
  EXPECT_NEAR(r[2].bm25_score, 1.1246897647758132, 1e-9);
  EXPECT_EQ(r[3].post_id, "d2");
  EXPECT_NEAR(r[3].bm25_score, 0.9395274254529659, 1e-9);
}

TEST(TopicSplit, RetrieveLimitAndExclusion) {
  auto posts = toy_corpus();
  auto index = build_index(posts);
  auto r = retrieve(index, spec({"apple", "cherry"}), 2);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].post_id, "d3");
  EXPECT_TRUE(retrieve(index, spec({"zebra"})).empty());
  std::vector<Post> one = {post("only", "u", "s", "apple pie")};
  auto single = retrieve(build_index(one), spec({"apple"}));
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].post_id, "only");
}

TEST(TopicSplit, MultiWordKeywordSumsTerms) {
  auto posts = toy_corpus();
  auto index = build_index(posts);
  auto joint = retrieve(index, spec({"apple cherry"}));
  auto split = retrieve(index, spec({"apple", "cherry"}));
  ASSERT_EQ(joint.size(), split.size());
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_DOUBLE_EQ(joint[i].bm25_score, split[i].bm25_score);
}

TEST(TopicSplit, RetrieveIsPermutationInvariant) {
  Rng rng(4);
  static const std::vector<std::string> words = {"seed", "soil", "rain", "loan", "stock", "tax", "the", "and"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Post> posts;
    for (int i = 0; i < 40; ++i) {
      std::string text;
      for (std::size_t w = 0; w < 1 + uniform_below(rng, 8); ++w) text += words[uniform_below(rng, words.size())] + " ";
      posts.push_back(post("p" + std::to_string(i), "u", "s", text));
    }
    auto topic = spec({"seed", "soil", "rain"});
    auto a = retrieve(build_index(posts), topic, 25);
    shuffle_in_place(posts, rng);
    auto b = retrieve(build_index(posts), topic, 25);
    EXPECT_EQ(a, b);
  }
}

TEST(TopicSplit, TopicSpecValidation) {
  EXPECT_THROW(make_topic_spec("Not A Category", "t", {"x"}), Error);
  EXPECT_THROW(make_topic_spec("Finance & Investing", "t", {}), Error);
  std::vector<std::string> many;
  for (int i = 0; i < 41; ++i) many.push_back("k" + std::to_string(i));
  EXPECT_THROW(make_topic_spec("Finance & Investing", "t", many), Error);
  auto dedup = make_topic_spec("Finance & Investing", "t", {"Stock", "stock ", "bond"});
  EXPECT_EQ(dedup.keywords.size(), 2u);
  EXPECT_THROW(topic_specs_from_json(json::parse(
                   R"([{"category":"Finance & Investing","topic":"t","keywords":["a"]},
                       {"category":"Finance & Investing","topic":"t","keywords":["b"]}])")),
               Error);
}

TEST(TopicSplit, PoolOfEightDropsBottomTwo) {
  std::map<std::string, std::vector<SplitEntry>> per_group;
  per_group["a"] = {{"p8", 8, 0}, {"p6", 6, 0}, {"p4", 4, 0}, {"p2", 2, 0}};
  per_group["b"] = {{"p7", 7, 0}, {"p5", 5, 0}, {"p3", 3, 0}, {"p1", 1, 0}};
  auto out = pool_and_filter(per_group, "t", 0.25);
  std::set<std::string> kept;
  for (const auto& [_, split] : out) {
    for (const auto& e : split.entries) kept.insert(e.post_id);
  }
  EXPECT_EQ(kept, (std::set<std::string>{"p3", "p4", "p5", "p6", "p7", "p8"}));
  EXPECT_EQ(out["a"].entries.front().normalized, 1.0);
  EXPECT_EQ(out["a"].entries.back().post_id, "p4");
  EXPECT_DOUBLE_EQ(out["a"].cutoff, 2.0 / 8.0);
}

TEST(TopicSplit, PoolTiesBrokenByPostId) {
  std::map<std::string, std::vector<SplitEntry>> per_group;
  per_group["a"] = {{"c", 1, 0}, {"a", 1, 0}};
  per_group["b"] = {{"d", 1, 0}, {"b", 1, 0}};
  auto out = pool_and_filter(per_group, "t", 0.5);
  ASSERT_EQ(out["a"].entries.size(), 1u);
  EXPECT_EQ(out["a"].entries[0].post_id, "c");
  ASSERT_EQ(out["b"].entries.size(), 1u);
  EXPECT_EQ(out["b"].entries[0].post_id, "d");
}

TEST(TopicSplit, LowRelevanceGroupMayEmpty) {
  std::map<std::string, std::vector<SplitEntry>> per_group;
  per_group["hi"] = entries("h", {9, 8, 7, 6, 5, 4});
  per_group["lo"] = entries("l", {0.1, 0.2});
  auto out = pool_and_filter(per_group, "t");
  EXPECT_TRUE(out["lo"].entries.empty());
  EXPECT_EQ(out["hi"].entries.size(), 6u);
  EXPECT_THROW(pool_and_filter(per_group, "t", 1.5), Error);
}

TEST(TopicSplit, FilterRemovesCeilCountAndKeepsOrder) {
  Rng rng(15);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::vector<SplitEntry>> per_group;
    std::size_t total = 0;
    for (const char* g : {"a", "b", "c"}) {
      std::vector<double> scores;
      for (std::size_t i = 0; i < uniform_below(rng, 20); ++i) scores.push_back(1.0 + static_cast<double>(uniform_below(rng, 10)));
      std::sort(scores.rbegin(), scores.rend());
      per_group[g] = entries(g, scores);
      total += scores.size();
    }
    const double drop = static_cast<double>(uniform_below(rng, 101)) / 100.0;
    auto out = pool_and_filter(per_group, "t", drop);
    std::size_t kept = 0;
    double min_kept = 2.0;
    for (const auto& [g, split] : out) {
      kept += split.entries.size();
      // Survivors are a subsequence of the group's ranking.
      std::size_t j = 0;
      for (const auto& e : split.entries) {
        while (j < per_group[g].size() && per_group[g][j].post_id != e.post_id) ++j;
        EXPECT_LT(j, per_group[g].size());
        min_kept = std::min(min_kept, e.normalized);
      }
    }
    EXPECT_EQ(total - kept, std::min(ceil_count(drop, total), total));
    if (kept > 0 && kept < total) {
      EXPECT_GE(min_kept, out.begin()->second.cutoff);
    }
  }
}

TEST(TopicSplit, SplitRoundTrip) {
  TopicSplit split{"d", "t", {{"p1", 2.5, 1.0}, {"p2", 1.25, 0.5}}, 0.0};
  auto back = parse_split(serialize_split(split), "d", "t");
  EXPECT_EQ(back.entries, split.entries);
}
