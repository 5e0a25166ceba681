#include <gtest/gtest.h>

#include <cmath>

#include "splits/groupness.hpp"
#include "test_support.hpp"

using namespace splits;
using splits::testing::post;

namespace {

std::vector<GroupnessScore> scores_of(std::initializer_list<double> values) {
  std::vector<GroupnessScore> out;
  int i = 0;
  for (double v : values) out.push_back({"u" + std::to_string(i++), v, 0.0, 1});
  return out;
}

// Hand-evaluated: one ln term per distinct seed subreddit.
double oracle(const std::vector<Post>& posts, const std::string& author, const std::set<std::string>& seeds) {
  std::map<std::string, int> c;
  for (const auto& p : posts) {
    if (p.author_id == author && seeds.count(p.subreddit_id)) ++c[p.subreddit_id];
  }
  double s = 0.0;
  for (const auto& [_, n] : c) s += std::log(1.0 + n);
  return s;
}

std::set<std::string> random_seeds(Rng& rng, std::size_t subs) {
  std::set<std::string> seeds;
  for (std::size_t s = 0; s < subs; ++s) {
    if (fair_coin(rng)) seeds.insert("s" + std::to_string(s));
  }
  return seeds;
}

}  // namespace

TEST(Groupness, WorkedExamples) {
  CorpusStore store({post("1", "u", "a"), post("2", "u", "b"), post("3", "v", "a"), post("4", "v", "a"),
                     post("5", "w", "other")});
  EXPECT_NEAR(groupness("u", {"a", "b"}, store), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(groupness("v", {"a", "b"}, store), std::log(3.0), 1e-12);
  EXPECT_LT(groupness("v", {"a", "b"}, store), groupness("u", {"a", "b"}, store));
  EXPECT_EQ(groupness("w", {"a", "b"}, store), 0.0);
  EXPECT_EQ(groupness("nobody", {"a"}, store), 0.0);
}

TEST(Groupness, MatchesHandComputedSums) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto store = splits::testing::random_store(rng, 8, 20, 0.4);
    auto seeds = random_seeds(rng, 8);
    for (const auto& a : store.authors()) {
      EXPECT_NEAR(groupness(a, seeds, store), oracle(store.posts(), a, seeds), 1e-12);
    }
  }
}

TEST(Groupness, ZeroIffNoSeedPosts) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto store = splits::testing::random_store(rng, 6, 10, 0.3);
    auto seeds = random_seeds(rng, 6);
    for (const auto& a : store.authors()) {
      bool any = false;
      for (auto pos : store.posts_by_author(a)) any |= seeds.count(store.at(pos).subreddit_id) > 0;
      EXPECT_EQ(groupness(a, seeds, store) == 0.0, !any);
    }
  }
}

TEST(Groupness, MonotoneInSeedActivity) {
  Rng rng(10);
  for (int trial = 0; trial < 1000; ++trial) {
    auto store = splits::testing::random_store(rng, 5, 6, 0.4);
    auto seeds = random_seeds(rng, 5);
    seeds.insert("s0");
    const auto& authors = store.authors();
    if (authors.empty()) continue;
    const std::string& a = *std::next(authors.begin(), static_cast<std::ptrdiff_t>(uniform_below(rng, authors.size())));
    const double before = groupness(a, seeds, store);
    auto posts = store.posts();
    posts.push_back(post("extra", a, "s0"));
    EXPECT_GT(groupness(a, seeds, CorpusStore(posts)), before);
    posts.back() = post("extra", a, "not_a_seed");
    EXPECT_EQ(groupness(a, seeds, CorpusStore(posts)), before);
  }
}

TEST(Groupness, AdditiveOverDisjointSeedSets) {
  Rng rng(12);
  for (int trial = 0; trial < 1000; ++trial) {
    auto store = splits::testing::random_store(rng, 6, 6, 0.5);
    std::set<std::string> left, right;
    for (std::size_t s = 0; s < 6; ++s) {
      const auto r = uniform_below(rng, 3);
      if (r == 0) left.insert("s" + std::to_string(s));
      if (r == 1) right.insert("s" + std::to_string(s));
    }
    std::set<std::string> both = left;
    both.insert(right.begin(), right.end());
    for (const auto& a : store.authors()) {
      EXPECT_NEAR(groupness(a, both, store), groupness(a, left, store) + groupness(a, right, store), 1e-12);
    }
  }
}

TEST(Groupness, PercentileCutoffNearestRank) {
  auto s = scores_of({4, 1, 3, 2});
  EXPECT_EQ(percentile_cutoff(s, 75), 3.0);
  EXPECT_EQ(percentile_cutoff(s, 0), 1.0);
  EXPECT_EQ(percentile_cutoff(s, 100), 4.0);
  EXPECT_EQ(percentile_cutoff(s, 50), 2.0);
  EXPECT_THROW(percentile_cutoff(std::vector<GroupnessScore>{}, 50), Error);
  EXPECT_THROW(percentile_cutoff(s, 101), Error);
}

TEST(Groupness, PercentileRanksAreConsistent) {
  auto s = scores_of({1, 2, 2, 5});
  assign_percentiles(s);
  EXPECT_EQ(s[0].percentile, 0.0);
  EXPECT_EQ(s[1].percentile, 25.0);
  EXPECT_EQ(s[2].percentile, 25.0);
  EXPECT_EQ(s[3].percentile, 75.0);
}

TEST(Groupness, GroupCorpusRetention) {
  CorpusStore store({post("1", "u", "a"), post("2", "u", "b"), post("3", "v", "a"), post("4", "w", "a"),
                     post("5", "w", "a"), post("6", "w", "x"), post("7", "outsider", "x")});
  auto corpus = build_group_corpus(store, "demo", {"a", "b"});
  ASSERT_EQ(corpus.users.size(), 3u);
  EXPECT_EQ(corpus.users[0].author_id, "u");
  EXPECT_EQ(corpus.users[2].posts, 3u);
  // Every post of each member, including outside the seed set.
  EXPECT_EQ(corpus.positions.size(), 6u);
  EXPECT_EQ(corpus.retained_authors(percentile_cutoff(corpus.users, 75)), std::vector<std::string>{"u"});
  const double cutoff = percentile_cutoff(corpus.users, 50);
  EXPECT_EQ(corpus.retained_authors(cutoff), (std::vector<std::string>{"u", "w"}));
}

TEST(Groupness, ScanPhrasesNormalizes) {
  PhraseSet phrases{"catholic", {"I am Catholic"}, {"I'm not a Catholic"}};
  std::vector<Post> posts = {post("1", "u", "s", "I am Catholic and happy"), post("2", "u", "s", "nothing here"),
                             post("3", "v", "s", "well   i'm not a CATHOLIC honestly"),
                             post("4", "v", "s", "I  am\tcatholic, and i'm not a catholic")};
  auto hits = scan_phrases(posts, phrases, 2);
  ASSERT_EQ(hits.size(), 4u);
  EXPECT_EQ(hits[0], (PhraseCandidate{"1", "u", "I am Catholic", PhraseKind::self}));
  EXPECT_EQ(hits[1], (PhraseCandidate{"3", "v", "I'm not a Catholic", PhraseKind::anti}));
  EXPECT_EQ(hits[2].post_id, "4");
  EXPECT_EQ(hits[2].kind, PhraseKind::self);
  EXPECT_EQ(hits[3].kind, PhraseKind::anti);
}

TEST(Groupness, PhraseSetValidation) {
  EXPECT_THROW((PhraseSet{"d", {}, {"x"}}.validate()), Error);
  EXPECT_THROW((PhraseSet{"d", {"I am X"}, {"i am  x"}}.validate()), Error);
  EXPECT_NO_THROW((PhraseSet{"d", {"a"}, {"b"}}.validate()));
}

TEST(Groupness, ParseSelfIdResponses) {
  struct Case {
    const char* response;
    std::optional<std::pair<bool, bool>> expected;
  };
  const Case cases[] = {
      {"User self-identifies as demographic: yes\nUser self-identifies as mutually exclusive demographic: no",
       std::pair{true, false}},
      {"User self-identifies as demographic: no\nUser self-identifies as mutually exclusive demographic: yes",
       std::pair{false, true}},
      {"**User self-identifies as demographic:** Yes.\n**User self-identifies as mutually exclusive demographic:** No",
       std::pair{true, false}},
      {"User self-identifies as demographic: yes", std::nullopt},
      {"User self-identifies as demographic: maybe\nUser self-identifies as mutually exclusive demographic: no",
       std::nullopt},
      {"I cannot tell.", std::nullopt},
  };
  for (const auto& c : cases) {
    auto got = parse_self_id_response(c.response);
    ASSERT_EQ(got.has_value(), c.expected.has_value()) << c.response;
    if (got) {
      EXPECT_EQ(got->self_identifies, c.expected->first);
      EXPECT_EQ(got->mutually_exclusive, c.expected->second);
    }
  }
}

TEST(Groupness, VerifyCandidatesWithStub) {
  std::vector<Post> posts = {post("1", "u", "s", "I am Catholic"), post("2", "v", "s", "I'm not a Catholic"),
                             post("3", "w", "s", "I am Catholic lol")};
  CorpusStore store(posts);
  PhraseSet phrases{"Catholic", {"I am Catholic"}, {"I'm not a Catholic"}};
  auto candidates = scan_phrases(store.posts(), phrases, 1);
  ASSERT_EQ(candidates.size(), 3u);
  splits::testing::FunctionClient client("v", [](const std::string& prompt) -> std::string {
    EXPECT_NE(prompt.find("### Demographic\nCatholic"), std::string::npos);
    if (prompt.find("lol") != std::string::npos) return "garbled";
    return "User self-identifies as demographic: yes\nUser self-identifies as mutually exclusive demographic: no";
  });
  auto verdicts = verify_candidates(candidates, store, client, phrases, {2});
  EXPECT_EQ(verdicts, (std::vector<Verification>{Verification::verified, Verification::rejected,
                                                 Verification::indeterminate}));
  EXPECT_EQ(client.calls(), 3u);
}

TEST(Groupness, TransportFailureIsIndeterminate) {
  CorpusStore store({post("1", "u", "s", "I am Catholic")});
  PhraseSet phrases{"Catholic", {"I am Catholic"}, {"not"}};
  auto candidates = scan_phrases(store.posts(), phrases, 1);
  splits::testing::FunctionClient client(
      "v", [](const std::string&) -> std::string { throw Error(ErrorKind::transport, "down"); });
  EXPECT_EQ(verify_candidates(candidates, store, client, phrases), std::vector<Verification>{Verification::indeterminate});
}

TEST(Groupness, MembershipCurveNormalization) {
  std::vector<CurveUser> users = {{"a", 10.0, 10, 1, 0}, {"b", 20.0, 30, 0, 0}};
  auto curve = membership_curve(users, 100.0);
  ASSERT_EQ(curve.bins.size(), 1u);
  EXPECT_NEAR(*curve.bins[0].self_rate, 0.025, 1e-15);
  EXPECT_EQ(*curve.bins[0].anti_rate, 0.0);
  EXPECT_EQ(*curve.bins[0].mean_chattiness, 20.0);
}

TEST(Groupness, MembershipCurveBins) {
  std::vector<CurveUser> users = {{"a", 0.0, 4, 0, 0}, {"b", 99.0, 4, 2, 1}, {"c", 100.0, 4, 0, 0}};
  auto curve = membership_curve(users, 25.0);
  ASSERT_EQ(curve.bins.size(), 4u);
  EXPECT_EQ(curve.bins[0].lower, 0.0);
  EXPECT_EQ(curve.bins[3].upper, 100.0);
  EXPECT_EQ(curve.bins[0].users, 1u);
  EXPECT_FALSE(curve.bins[1].self_rate.has_value());
  EXPECT_EQ(curve.bins[3].users, 2u);
  EXPECT_NEAR(*curve.bins[3].self_rate, 0.25, 1e-15);
  EXPECT_THROW(membership_curve(users, 30.0), Error);
  EXPECT_THROW(membership_curve(users, 0.0), Error);
}

TEST(Groupness, PlantedMembersConcentrateAtTop) {
  Rng rng(77);
  std::vector<Post> posts;
  int id = 0;
  for (int u = 0; u < 200; ++u) {
    const std::string author = "u" + std::to_string(u);
    const int seed_posts = u / 20;
    for (int i = 0; i < seed_posts; ++i) posts.push_back(post("p" + std::to_string(id++), author, "seed" + std::to_string(i % 3)));
    for (int i = 0; i < 5; ++i) {
      // Membership probability grows with seed activity.
      const bool member = uniform_below(rng, 10) < static_cast<std::uint64_t>(seed_posts);
      posts.push_back(post("p" + std::to_string(id++), author, "misc", member && i == 0 ? "I am a member" : "hello"));
    }
  }
  CorpusStore store(posts);
  auto corpus = build_group_corpus(store, "d", {"seed0", "seed1", "seed2"});
  std::vector<Post> corpus_posts;
  for (auto pos : corpus.positions) corpus_posts.push_back(store.at(pos));
  PhraseSet phrases{"d", {"I am a member"}, {"I am not a member"}};
  auto candidates = scan_phrases(corpus_posts, phrases, 2);
  std::vector<Verification> verdicts(candidates.size(), Verification::verified);
  auto curve = membership_curve(curve_users(corpus, candidates, verdicts), 25.0);
  ASSERT_TRUE(curve.bins.front().self_rate && curve.bins.back().self_rate);
  EXPECT_GT(*curve.bins.back().self_rate, *curve.bins.front().self_rate);
}

TEST(Groupness, CurveUsersCountDistinctPosts) {
  CorpusStore store({post("1", "u", "a", "I am X and I am X"), post("2", "u", "a", "plain")});
  auto corpus = build_group_corpus(store, "d", {"a"});
  std::vector<PhraseCandidate> candidates = {{"1", "u", "I am X", PhraseKind::self}, {"1", "u", "i am x", PhraseKind::self}};
  auto users = curve_users(corpus, candidates, {Verification::verified, Verification::verified});
  ASSERT_EQ(users.size(), 1u);
  EXPECT_EQ(users[0].self_hits, 1u);
  EXPECT_THROW(curve_users(corpus, candidates, {Verification::verified}), Error);
}
