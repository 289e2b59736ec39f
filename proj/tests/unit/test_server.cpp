#include <gtest/gtest.h>

#include <memory>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "reweighter/error.hpp"
#include "reweighter/server.hpp"

namespace {

using namespace rw;
using nlohmann::json;

std::shared_ptr<const Dataset> small_dataset() {
  DatasetGenConfig c;
  c.num_classes = 3;
  c.per_class = 30;
  c.noise_ratio = 0.2;
  c.val_per_class = 3;
  c.test_per_class = 10;
  c.seed = 4;
  return std::make_shared<const Dataset>(generate(c));
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ds = small_dataset();
    ServerOptions opts;
    opts.port = 0;
    server = std::make_unique<ApiServer>(std::make_unique<Session>(ds, SessionConfig{}), opts);
    port = server->start();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    client->set_read_timeout(60, 0);
  }
  void TearDown() override { server->stop(); }

  json get(const std::string& path, int expect = 200) {
    auto res = client->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }
  json post(const std::string& path, const json& body, int expect = 200) {
    auto res = client->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << ": " << res->body;
    return json::parse(res->body);
  }
  std::string statehash() { return get("/api/statehash").at("statehash").get<std::string>(); }

  static json drag(SampleId id, const char* dir) {
    return json{{"kind", "DRAG_WEIGHT"}, {"target", id}, {"direction", dir}};
  }

  std::shared_ptr<const Dataset> ds;
  std::unique_ptr<ApiServer> server;
  std::unique_ptr<httplib::Client> client;
  int port = 0;
};

TEST_F(ServerTest, HealthIsOk) { EXPECT_EQ(get("/api/health"), json({{"status", "ok"}})); }

TEST_F(ServerTest, UnknownSampleIs404) {
  const json body = post("/api/adjustments", json::array({drag(999999, "up")}), 404);
  EXPECT_EQ(body.at("code"), "unknown_sample");
  EXPECT_TRUE(body.contains("message"));
}

TEST_F(ServerTest, AdjustmentsAreStagedUntilRecompute) {
  const int epoch = get("/api/layout").at("epoch").get<int>();
  const json staged = post("/api/adjustments", json::array({drag(ds->validation_ids()[0], "up")}));
  EXPECT_TRUE(staged.at("staged").get<bool>());
  EXPECT_EQ(staged.at("pending"), 1);
  EXPECT_EQ(get("/api/layout").at("epoch").get<int>(), epoch);
  EXPECT_EQ(get("/api/graph").at("val_weights")[0].get<double>(), 1.0);

  const json rec = post("/api/recompute", json::object());
  EXPECT_EQ(rec.at("epoch").get<int>(), epoch + 1);
  EXPECT_EQ(get("/api/layout").at("epoch").get<int>(), epoch + 1);
  EXPECT_GE(get("/api/graph").at("val_weights")[0].get<double>(), 1.1 - 1e-12);
  EXPECT_EQ(get("/api/recompute/status").at("pending"), 0);
}

TEST_F(ServerTest, RecomputeDiffFlagsTopTenPercent) {
  const json rec = post("/api/recompute", json::object());
  const json& entries = rec.at("diff").at("entries");
  std::size_t flagged = 0;
  for (const json& e : entries) flagged += e.at("flagged").get<bool>();
  const std::size_t n = ds->train_ids().size();
  EXPECT_EQ(flagged, (n + 9) / 10);
  const json wider = get("/api/diff?pct=20");
  flagged = 0;
  for (const json& e : wider.at("entries")) flagged += e.at("flagged").get<bool>();
  EXPECT_EQ(flagged, (2 * n + 9) / 10);
}

TEST_F(ServerTest, DiffBeforeRecomputeIs409) {
  EXPECT_EQ(get("/api/diff", 409).at("code"), "no_snapshot");
}

TEST_F(ServerTest, GetsLeaveStatehashUnchanged) {
  const std::string h = statehash();
  get("/api/graph");
  get("/api/layout");
  get("/api/clusters");
  get("/api/cluster/t0/samples?budget=5");
  get("/api/session");
  post("/api/select", json{{"sample_ids", {ds->train_ids()[0]}}, {"side", "training"}});
  EXPECT_EQ(statehash(), h);
}

TEST_F(ServerTest, FailingBatchLeavesStatehashUnchanged) {
  const std::string h = statehash();
  const json batch = json::array({drag(ds->validation_ids()[0], "up"), drag(424242, "down")});
  post("/api/adjustments", batch, 404);
  EXPECT_EQ(statehash(), h);
  EXPECT_EQ(get("/api/recompute/status").at("pending"), 0);
  post("/api/adjustments?apply=immediate", batch, 404);
  EXPECT_EQ(statehash(), h);
}

TEST_F(ServerTest, StagingChangesStatehashAndUndoRestoresIt) {
  const std::string h = statehash();
  post("/api/adjustments", json::array({drag(ds->validation_ids()[1], "down")}));
  EXPECT_NE(statehash(), h);
  EXPECT_TRUE(post("/api/undo", json::object()).at("unstaged").get<bool>());
  EXPECT_EQ(statehash(), h);
  EXPECT_EQ(post("/api/undo", json::object(), 409).at("code"), "nothing_to_undo");
}

TEST_F(ServerTest, SelectReturnsTopThreeContributors) {
  const SampleId t = ds->train_ids()[5];
  const json body = post("/api/select", json{{"sample_ids", {t}}, {"side", "training"}});
  ASSERT_EQ(body.at("rows").size(), 1u);
  const json& row = body.at("rows")[0];
  EXPECT_EQ(row.at("id"), t);
  EXPECT_LE(row.at("positive").size(), 3u);
  EXPECT_LE(row.at("negative").size(), 3u);
  for (const json& c : row.at("positive")) EXPECT_GT(c.at("value").get<double>(), 0.0);
  for (const json& c : row.at("negative")) EXPECT_LT(c.at("value").get<double>(), 0.0);
  EXPECT_EQ(post("/api/select", json{{"sample_ids", {t}}, {"side", "both"}}, 400).at("code"), "invalid_argument");
}

TEST_F(ServerTest, ClusterSamplesRespectBudget) {
  const json body = get("/api/cluster/t0/samples?budget=3");
  EXPECT_LE(body.at("samples").size(), 3u);
  for (const json& s : body.at("samples")) {
    EXPECT_GE(s.at("x").get<double>(), 0.0);
    EXPECT_LE(s.at("x").get<double>(), 1.0);
    EXPECT_TRUE(s.contains("glyph"));
  }
  EXPECT_EQ(get("/api/cluster/t9999/samples", 404).at("code"), "not_found");
}

TEST_F(ServerTest, MalformedBodyIs400) {
  auto res = client->Post("/api/adjustments", "{not json", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("code"), "malformed");
}

TEST_F(ServerTest, OversizedBodyIs413) {
  auto res = client->Post("/api/adjustments", std::string(10 * 1024 * 1024 + 1, ' '), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
}

TEST_F(ServerTest, SessionRoundTripKeepsStatehash) {
  post("/api/adjustments?apply=immediate", json::array({drag(ds->validation_ids()[2], "up")}));
  post("/api/recompute", json::object());
  const std::string h = statehash();
  auto saved = client->Get("/api/session");
  ASSERT_TRUE(saved);
  auto res = client->Post("/api/session", saved->body, "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(statehash(), h);
  auto replayed = client->Post("/api/session?mode=replay", saved->body, "application/json");
  ASSERT_TRUE(replayed);
  EXPECT_EQ(statehash(), h);
}

TEST_F(ServerTest, FineTuneReportsAccuracy) {
  const json m = post("/api/finetune", json::object());
  EXPECT_GE(m.at("test_accuracy").get<double>(), 0.0);
  EXPECT_EQ(m.at("per_class_accuracy").size(), 3u);
}

TEST_F(ServerTest, CorsOnlyForLocalOrigins) {
  auto local = client->Get("/api/health", httplib::Headers{{"Origin", "http://localhost:5173"}});
  ASSERT_TRUE(local);
  EXPECT_EQ(local->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  auto remote = client->Get("/api/health", httplib::Headers{{"Origin", "http://example.com"}});
  ASSERT_TRUE(remote);
  EXPECT_FALSE(remote->has_header("Access-Control-Allow-Origin"));
}

TEST(ServerBind, PortInUseThrows) {
  ServerOptions opts;
  opts.port = 0;
  ApiServer a(std::make_unique<Session>(small_dataset(), SessionConfig{}), opts);
  opts.port = a.start();
  ApiServer b(std::make_unique<Session>(small_dataset(), SessionConfig{}), opts);
  EXPECT_THROW(b.bind(), Error);
  a.stop();
}

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status_for(errc::kUnknownSample), 404);
  EXPECT_EQ(http_status_for(errc::kNothingToUndo), 409);
  EXPECT_EQ(http_status_for(errc::kPayloadTooLarge), 413);
  EXPECT_EQ(http_status_for(errc::kMalformed), 400);
  EXPECT_EQ(http_status_for(errc::kNoQualityEvidence), 422);
}

}  // namespace
