#include <gtest/gtest.h>

#include "splits/seedset.hpp"
#include "test_support.hpp"

using namespace splits;

namespace {

UserSetIndex chain_index() {
  return UserSetIndex({{"A", {"u1", "u2", "u3"}},
                       {"B", {"u2", "u3", "u4"}},
                       {"C", {"u4", "u5"}},
                       {"D", {"u1"}},
                       {"E", {"u9"}}});
}

const CandidateSlate& as_slate(const SlateOrComplete& r) { return std::get<CandidateSlate>(r); }

// Include B and C, exclude D, then drain the queue.
AnnotationSession run_chain(const UserSetIndex& index) {
  auto s = start_session("demo", "A", index, 100);
  next_slate(s, index, 101);
  record_decision(s, "B", Decision::include, 102);
  record_decision(s, "D", Decision::exclude, 103);
  next_slate(s, index, 104);
  record_decision(s, "C", Decision::include, 105);
  while (!std::holds_alternative<SessionComplete>(next_slate(s, index, 106))) {
  }
  return s;
}

}  // namespace

TEST(Seedset, StartRejectsUnknownSubreddit) {
  auto index = chain_index();
  EXPECT_THROW(start_session("demo", "Z", index), Error);
}

TEST(Seedset, SlateListsNeighboursOfSource) {
  auto index = chain_index();
  auto s = start_session("demo", "A", index);
  auto slate = as_slate(next_slate(s, index));
  EXPECT_EQ(slate.source, "A");
  EXPECT_EQ(slate.candidates(), (std::set<std::string>{"B", "D"}));
  ASSERT_FALSE(slate.jaccard_top.empty());
  EXPECT_EQ(slate.jaccard_top[0].subreddit, "B");
  EXPECT_EQ(s.shown, (std::set<std::string>{"B", "D"}));
}

TEST(Seedset, ChainFlowProducesSeedSet) {
  auto index = chain_index();
  auto s = run_chain(index);
  EXPECT_TRUE(s.complete);
  EXPECT_EQ(s.included, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(s.excluded, (std::set<std::string>{"D"}));
  auto artifact = export_seed_set(s, 200);
  EXPECT_EQ(artifact.subreddits, s.included);
  EXPECT_EQ(artifact.created_at, 200);
  EXPECT_EQ(artifact.log_hash, event_log_hash(s));
}

TEST(Seedset, DecidedCandidatesAreNotShownAgain) {
  auto index = chain_index();
  auto s = start_session("demo", "A", index);
  next_slate(s, index);
  record_decision(s, "B", Decision::include);
  record_decision(s, "D", Decision::exclude);
  auto slate = as_slate(next_slate(s, index));
  EXPECT_EQ(slate.source, "B");
  EXPECT_EQ(slate.candidates(), (std::set<std::string>{"C"}));
}

TEST(Seedset, ChangingADecisionIsInvalidState) {
  auto index = chain_index();
  auto s = start_session("demo", "A", index);
  next_slate(s, index);
  record_decision(s, "B", Decision::include);
  try {
    record_decision(s, "B", Decision::exclude);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_state);
  }
  EXPECT_THROW(record_decision(s, "E", Decision::include), Error);
}

TEST(Seedset, DecisionWithoutSlateIsInvalidState) {
  auto index = chain_index();
  auto s = start_session("demo", "A", index);
  EXPECT_THROW(record_decision(s, "B", Decision::include), Error);
}

TEST(Seedset, ExportBeforeCompleteFails) {
  auto index = chain_index();
  auto s = start_session("demo", "A", index);
  next_slate(s, index);
  EXPECT_THROW(export_seed_set(s), Error);
}

TEST(Seedset, CompletionIsStable) {
  auto index = chain_index();
  auto s = run_chain(index);
  const auto log_size = s.event_log.size();
  auto again = next_slate(s, index);
  ASSERT_TRUE(std::holds_alternative<SessionComplete>(again));
  EXPECT_EQ(std::get<SessionComplete>(again).seed_set, s.included);
  EXPECT_EQ(s.event_log.size(), log_size);
}

TEST(Seedset, ReplayReproducesState) {
  auto index = chain_index();
  auto s = run_chain(index);
  auto log = parse_event_log(serialize_event_log(s.event_log));
  EXPECT_EQ(log, s.event_log);
  EXPECT_EQ(replay(log, index), s);
}

TEST(Seedset, ReplayRandomSessions) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    auto store = splits::testing::random_store(rng, 15, 30, 0.25);
    auto index = build_user_set_index(store);
    SlateOptions options;
    options.per_measure = 1 + uniform_below(rng, 4);
    const auto& first = index.subreddits()[uniform_below(rng, index.subreddit_count())];
    auto s = start_session("d", first, index, 1);
    std::int64_t t = 2;
    for (int step = 0; step < 50; ++step) {
      auto r = next_slate(s, index, t++, options);
      if (std::holds_alternative<SessionComplete>(r)) break;
      for (const auto& c : std::get<CandidateSlate>(r).candidates()) {
        if (uniform_below(rng, 4) == 0) continue;  // left undecided
        record_decision(s, c, fair_coin(rng) ? Decision::include : Decision::exclude, t++);
      }
    }
    auto rebuilt = replay(parse_event_log(serialize_event_log(s.event_log)), index, options);
    EXPECT_EQ(rebuilt, s);
    // Every included subreddit is unique and never also excluded.
    std::set<std::string> inc(s.included.begin(), s.included.end());
    EXPECT_EQ(inc.size(), s.included.size());
    for (const auto& e : s.excluded) EXPECT_FALSE(inc.count(e));
  }
}

TEST(Seedset, ReplayRejectsTamperedLog) {
  auto index = chain_index();
  auto s = run_chain(index);
  auto log = s.event_log;
  EXPECT_THROW(replay({}, index), Error);
  log[2].subreddit = "E";
  EXPECT_THROW(replay(log, index), Error);
}

TEST(Seedset, ArtifactJsonRoundTrip) {
  auto index = chain_index();
  auto artifact = export_seed_set(run_chain(index), 5);
  EXPECT_EQ(seed_set_from_json(to_json(artifact)), artifact);
}

TEST(Seedset, ParseDecision) {
  EXPECT_EQ(parse_decision("include"), Decision::include);
  EXPECT_EQ(parse_decision("exclude"), Decision::exclude);
  EXPECT_THROW(parse_decision("maybe"), Error);
}
