#include <gtest/gtest.h>

#include <thread>

#include "splits/seedset_service.hpp"
#include "test_support.hpp"

using namespace splits;
using splits::testing::post;

namespace {

CorpusStore chain_store() {
  std::vector<Post> posts;
  int id = 0;
  auto add = [&](const std::string& sub, std::initializer_list<const char*> users) {
    for (const char* u : users) posts.push_back(post("p" + std::to_string(id++), u, sub, "text in " + sub));
  };
  add("A", {"u1", "u2", "u3"});
  add("B", {"u2", "u3", "u4"});
  add("C", {"u4", "u5"});
  add("D", {"u1"});
  add("E", {"u9"});
  return CorpusStore(std::move(posts));
}

class Running {
 public:
  Running(const CorpusStore& store, const UserSetIndex& index, SeedsetServiceOptions options)
      : service_(store, index, std::move(options)) {
    port_ = service_.bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_.listen(); });
    service_.wait_until_ready();
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_connection_timeout(5);
    return c;
  }

 private:
  SeedsetService service_;
  int port_ = 0;
  std::thread thread_;
};

json body(const httplib::Result& r) { return json::parse(r->body); }

std::string post_json(httplib::Client& c, const std::string& path, const json& j, int expected) {
  auto r = c.Post(path, j.dump(), "application/json");
  EXPECT_TRUE(r);
  if (!r) return {};
  EXPECT_EQ(r->status, expected) << path << ": " << r->body;
  return r->body;
}

SeedsetServiceOptions fixed_clock(SeedsetServiceOptions o = {}) {
  o.clock = [] { return std::int64_t{42}; };
  return o;
}

}  // namespace

TEST(SeedsetService, FullSessionOverHttp) {
  auto store = chain_store();
  auto index = build_user_set_index(store);
  splits::testing::TempDir dir;
  auto options = fixed_clock();
  options.export_dir = dir.path() / "exports";
  Running server(store, index, options);
  auto c = server.client();

  const auto id = json::parse(post_json(c, "/sessions", {{"demographic", "demo"}, {"initial_subreddit", "A"}}, 201))
                      .at("session_id")
                      .get<std::string>();
  auto slate = c.Get("/sessions/" + id + "/slate");
  ASSERT_TRUE(slate);
  ASSERT_EQ(slate->status, 200);
  auto j = body(slate);
  EXPECT_EQ(j.at("source"), "A");
  EXPECT_FALSE(j.at("complete").get<bool>());
  ASSERT_FALSE(j.at("jaccard_top").empty());
  const auto& top = j.at("jaccard_top")[0];
  EXPECT_EQ(top.at("subreddit"), "B");
  EXPECT_EQ(top.at("users"), 3);
  EXPECT_EQ(top.at("samples").size(), 3u);

  // The open slate is not advanced while candidates remain undecided.
  EXPECT_EQ(body(c.Get("/sessions/" + id + "/slate")).at("source"), "A");

  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "B"}, {"decision", "include"}}, 200);
  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "B"}, {"decision", "exclude"}}, 409);
  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "D"}, {"decision", "exclude"}}, 200);
  post_json(c, "/sessions/" + id + "/export", json::object(), 409);

  EXPECT_EQ(body(c.Get("/sessions/" + id + "/slate")).at("source"), "B");
  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "C"}, {"decision", "include"}}, 200);
  json last;
  for (int i = 0; i < 5; ++i) {
    last = body(c.Get("/sessions/" + id + "/slate?advance=true"));
    if (last.at("complete").get<bool>()) break;
  }
  ASSERT_TRUE(last.at("complete").get<bool>());
  EXPECT_EQ(last.at("seed_set"), json::array({"A", "B", "C"}));

  auto artifact = seed_set_from_json(json::parse(post_json(c, "/sessions/" + id + "/export", json::object(), 200)));
  EXPECT_EQ(artifact.subreddits, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(artifact.created_at, 42);
  EXPECT_EQ(load_seed_set(dir.path() / "exports" / "demo.json"), artifact);

  auto state = c.Get("/sessions/" + id);
  ASSERT_TRUE(state);
  EXPECT_EQ(body(state).at("included"), json::array({"A", "B", "C"}));
}

TEST(SeedsetService, ErrorStatuses) {
  auto store = chain_store();
  auto index = build_user_set_index(store);
  Running server(store, index, fixed_clock());
  auto c = server.client();
  auto missing = c.Get("/sessions/s9999/slate");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  post_json(c, "/sessions", {{"demographic", "demo"}, {"initial_subreddit", "nope"}}, 404);
  post_json(c, "/sessions", {{"demographic", "demo"}}, 400);
  auto bad = c.Post("/sessions", "{not json", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  const auto id = json::parse(post_json(c, "/sessions", {{"demographic", "d"}, {"initial_subreddit", "A"}}, 201))
                      .at("session_id")
                      .get<std::string>();
  c.Get("/sessions/" + id + "/slate");
  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "B"}, {"decision", "maybe"}}, 400);
  post_json(c, "/sessions/" + id + "/decisions", {{"subreddit", "E"}, {"decision", "include"}}, 409);
}

TEST(SeedsetService, SharedTokenRequired) {
  auto store = chain_store();
  auto index = build_user_set_index(store);
  auto options = fixed_clock();
  options.shared_token = "sekrit";
  Running server(store, index, options);
  auto c = server.client();
  post_json(c, "/sessions", {{"demographic", "d"}, {"initial_subreddit", "A"}}, 401);
  c.set_bearer_token_auth("wrong");
  post_json(c, "/sessions", {{"demographic", "d"}, {"initial_subreddit", "A"}}, 401);
  c.set_bearer_token_auth("sekrit");
  post_json(c, "/sessions", {{"demographic", "d"}, {"initial_subreddit", "A"}}, 201);
}

TEST(SeedsetService, RestartRecoversSessions) {
  auto store = chain_store();
  auto index = build_user_set_index(store);
  splits::testing::TempDir dir;
  auto options = fixed_clock();
  options.state_dir = dir.path() / "sessions";
  AnnotationSession before;
  std::string id;
  {
    SessionManager manager(store, index, options);
    id = manager.create("demo", "A");
    manager.slate(id, false);
    manager.decide(id, "B", Decision::include);
    before = manager.snapshot(id);
  }
  SessionManager recovered(store, index, options);
  EXPECT_EQ(recovered.snapshot(id), before);
  // Work continues where it stopped, and new ids do not collide.
  recovered.decide(id, "D", Decision::exclude);
  EXPECT_NE(recovered.create("demo2", "C"), id);
  SessionManager again(store, index, options);
  EXPECT_EQ(again.snapshot(id), recovered.snapshot(id));
  EXPECT_EQ(again.ids().size(), 2u);
}

TEST(SeedsetService, ConcurrentSessionsAreIndependent) {
  auto store = chain_store();
  auto index = build_user_set_index(store);
  SessionManager manager(store, index, fixed_clock());
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back(manager.create("d" + std::to_string(i), "A"));
  std::vector<std::thread> workers;
  for (const auto& id : ids) {
    workers.emplace_back([&manager, id] {
      manager.slate(id, false);
      manager.decide(id, "B", Decision::include);
      manager.decide(id, "D", Decision::exclude);
      manager.slate(id, false);
      manager.decide(id, "C", Decision::include);
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& id : ids) {
    EXPECT_EQ(manager.snapshot(id).included, (std::vector<std::string>{"A", "B", "C"}));
  }
}
