#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "biasner/ingest.hpp"
#include "biasner/service.hpp"
#include "biasner/synthetic.hpp"
#include "oracles.hpp"

using namespace biasner;
using nlohmann::json;

namespace {

const char* kOverpriced = "The overpriced product from the highly successful company was surprisingly popular.";

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = oracle::temp_dir("svc");
    start();
  }
  void TearDown() override {
    client_.reset();
    service_.reset();
    std::filesystem::remove_all(dir_);
  }

  void start() {
    ServiceConfig c;
    c.port = 0;
    c.workspace = dir_.string();
    c.model.d_model = 16;
    c.model.n_heads = 2;
    c.model.d_k = 8;
    c.model.d_ff = 32;
    c.model.n_layers = 1;
    c.model.dropout_rate = 0.0;
    c.hyper.epochs = 2;
    c.hyper.learning_rate = 1e-2;
    service_ = std::make_unique<Service>(c);
    const int port = service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_read_timeout(120, 0);
  }

  void restart() {
    client_.reset();
    service_.reset();
    start();
  }

  std::pair<int, json> get(const std::string& path) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r) << path;
    return {r->status, r->body.empty() ? json() : json::parse(r->body, nullptr, false)};
  }

  std::pair<int, json> post(const std::string& path, const json& body) {
    auto r = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    return {r->status, json::parse(r->body, nullptr, false)};
  }

  json wait_job(uint64_t id) {
    for (int i = 0; i < 6000; ++i) {
      auto [code, j] = get("/jobs/" + std::to_string(id));
      EXPECT_EQ(code, 200);
      if (j["status"] == "done" || j["status"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ADD_FAILURE() << "job did not finish";
    return {};
  }

  void upload_overpriced() {
    std::vector<Record> recs;
    recs.push_back({"d", kOverpriced, {"overpriced", "highly successful", "surprisingly popular"}, "value",
                    Label::kBiased});
    for (const char* t : {"The meeting started at nine.", "A new printer was installed upstairs.",
                          "The product from the company arrived.", "The company was popular."})
      recs.push_back({"d", t, {}, "unspecified", Label::kNonBiased});
    auto [code, j] = post("/corpora", {{"format", "jsonl"}, {"data", records_to_jsonl(recs)}});
    ASSERT_EQ(code, 201);
    EXPECT_EQ(j["records"], 5);
  }

  json seed_all(json extra = json::object()) {
    json body{{"increment_size", 1.0},
              {"lexicon", {{"value", {"overpriced", "highly successful", "surprisingly popular"}}}}};
    body.update(extra);
    auto [code, j] = post("/loop/seed", body);
    EXPECT_EQ(code, 200) << j.dump();
    return j;
  }

  json accept_body(const json& item, const std::string& reviewer = "alice") {
    json decisions = json::array();
    for (size_t i = 0; i < item["spans"].size(); ++i) decisions.push_back({{"action", "accept"}});
    return {{"reviewer", reviewer}, {"version", item["version"]}, {"decisions", decisions}};
  }

  void accept_everything() {
    for (;;) {
      auto [code, j] = get("/review/next?reviewer=alice");
      ASSERT_EQ(code, 200);
      if (j["item"].is_null()) return;
      auto [rc, rj] = post("/review/" + std::to_string(j["item"]["id"].get<uint64_t>()), accept_body(j["item"]));
      ASSERT_EQ(rc, 200) << rj.dump();
    }
  }

  std::filesystem::path dir_;
  std::unique_ptr<Service> service_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(ServiceTest, HealthAndEmptyState) {
  auto [code, j] = get("/health");
  EXPECT_EQ(code, 200);
  EXPECT_EQ(j["status"], "ok");
  auto [sc, sj] = get("/loop/state");
  EXPECT_EQ(sc, 200);
  EXPECT_EQ(sj["initialized"], false);
  auto [nc, nj] = get("/review/next?reviewer=a");
  EXPECT_EQ(nc, 200);
  EXPECT_TRUE(nj["item"].is_null());
  EXPECT_EQ(get("/metrics").first, 404);
  EXPECT_EQ(get("/nowhere").first, 404);
}

TEST_F(ServiceTest, ErrorBodies) {
  auto r = client_->Post("/corpora", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "invalid_json");
  auto [c1, j1] = post("/corpora", {{"format", "jsonl"}, {"data", "{\"Text\":\"  \"}\n"}});
  EXPECT_EQ(c1, 422);
  EXPECT_EQ(j1["error"]["code"], "empty_corpus");
  auto [c2, j2] = post("/loop/seed", json::object());
  EXPECT_EQ(c2, 409);
  EXPECT_EQ(j2["error"]["code"], "no_corpus");
  EXPECT_EQ(get("/review/next").first, 400);
  auto [c3, j3] = post("/predict", {{"text", "hi"}});
  EXPECT_EQ(c3, 409);
  EXPECT_EQ(j3["error"]["code"], "no_model");
  auto [c4, j4] = post("/corpora", {{"format", "jsonl"}, {"data", "{\"Text\":\"a\",\"Label\":\"maybe\"}\n"}});
  EXPECT_EQ(c4, 422);
  EXPECT_EQ(j4["error"]["code"], "ingest");
}

TEST_F(ServiceTest, StaleVersionLeavesStateUnchanged) {
  upload_overpriced();
  seed_all();
  auto [code, next] = get("/review/next?reviewer=alice");
  ASSERT_EQ(code, 200);
  const json item = next["item"];
  json body = accept_body(item);
  body["version"] = item["version"].get<uint64_t>() + 1;
  const auto audit_before = get("/audit").second;
  const auto state_before = get("/loop/state").second;
  auto [sc, sj] = post("/review/" + std::to_string(item["id"].get<uint64_t>()), body);
  EXPECT_EQ(sc, 409);
  EXPECT_EQ(sj["error"]["code"], "stale_version");
  EXPECT_EQ(get("/audit").second, audit_before);
  EXPECT_EQ(get("/loop/state").second, state_before);
  auto [nc, nj] = post("/review/999", accept_body(item));
  EXPECT_EQ(nc, 404);
}

TEST_F(ServiceTest, RacingResolvesExactlyOneWins) {
  upload_overpriced();
  seed_all();
  const json item = get("/review/next?reviewer=alice").second["item"];
  const std::string path = "/review/" + std::to_string(item["id"].get<uint64_t>());
  const std::string body = accept_body(item).dump();
  const int port = client_->port();
  std::vector<int> codes(8);
  std::vector<std::thread> threads;
  for (size_t i = 0; i < codes.size(); ++i)
    threads.emplace_back([&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post(path, body, "application/json");
      codes[i] = r ? r->status : -1;
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(std::count(codes.begin(), codes.end(), 200), 1);
  EXPECT_EQ(std::count(codes.begin(), codes.end(), 409), static_cast<long>(codes.size() - 1));
  size_t resolves = 0;
  const json audit = get("/audit").second;
  for (const auto& e : audit["entries"])
    if (e["type"] == "resolve" && e["item"] == item["id"]) ++resolves;
  EXPECT_EQ(resolves, 1u);
}

TEST_F(ServiceTest, LeasesAndEmptyQueue) {
  upload_overpriced();
  seed_all({{"increment_size", 0.2}});
  const json a = get("/review/next?reviewer=alice").second;
  ASSERT_FALSE(a["item"].is_null());
  // The only queued item is leased to alice, so bob gets nothing.
  EXPECT_TRUE(get("/review/next?reviewer=bob").second["item"].is_null());
  EXPECT_EQ(get("/review/next?reviewer=alice").second["item"]["id"], a["item"]["id"]);
  accept_everything();
  const json after = get("/review/next?reviewer=bob").second;
  EXPECT_TRUE(after["item"].is_null());
  EXPECT_EQ(after["pending"], 0);
}

TEST_F(ServiceTest, ConsensusMode) {
  upload_overpriced();
  seed_all({{"reviewers", {"ann", "bob"}}, {"increment_size", 0.2}});
  EXPECT_EQ(get("/review/next?reviewer=eve").first, 422);
  const json item = get("/review/next?reviewer=ann").second["item"];
  const std::string path = "/review/" + std::to_string(item["id"].get<uint64_t>());
  auto [c1, j1] = post(path, accept_body(item, "ann"));
  EXPECT_EQ(c1, 200);
  EXPECT_EQ(j1["resolved"], false);
  // ann already voted and bob has not, so ann sees nothing new.
  EXPECT_TRUE(get("/review/next?reviewer=ann").second["item"].is_null());
  const json for_bob = get("/review/next?reviewer=bob").second["item"];
  ASSERT_FALSE(for_bob.is_null());
  auto [c2, j2] = post(path, accept_body(for_bob, "bob"));
  EXPECT_EQ(c2, 200);
  EXPECT_EQ(j2["resolved"], true);
}

TEST_F(ServiceTest, TrainPredictAndPersistence) {
  upload_overpriced();
  seed_all();
  accept_everything();
  auto [tc, tj] = post("/loop/train", {{"epochs", 200}, {"learning_rate", 1e-2}});
  ASSERT_EQ(tc, 202);
  const json job = wait_job(tj["job"].get<uint64_t>());
  ASSERT_EQ(job["status"], "done") << job.dump();
  EXPECT_EQ(job["result"]["trained_on"], 5);

  auto [pc, pj] = post("/predict", {{"text", kOverpriced}});
  ASSERT_EQ(pc, 200);
  std::vector<std::string> found;
  for (const auto& s : pj["spans"]) found.push_back(s["text"]);
  EXPECT_NE(std::find(found.begin(), found.end(), "overpriced"), found.end()) << pj.dump();
  for (const auto& s : pj["spans"]) {
    const std::string t = s["text"];
    EXPECT_EQ(std::string(kOverpriced).substr(s["char_start"], s["char_end"].get<size_t>() - s["char_start"].get<size_t>()), t);
  }

  auto [ac, aj] = get("/agreement");
  EXPECT_EQ(ac, 200);
  ASSERT_EQ(aj["increments"].size(), 1u);
  EXPECT_EQ(aj["increments"][0]["source"], "lexicon");

  auto r = client_->Get("/export/conll");
  ASSERT_TRUE(r);
  EXPECT_NE(r->body.find("overpriced\t-X-\t-X-\tB-BIAS"), std::string::npos);

  const json state = get("/loop/state").second;
  const json audit = get("/audit").second;
  restart();
  EXPECT_EQ(get("/loop/state").second, state);
  EXPECT_EQ(get("/audit").second, audit);
  EXPECT_EQ(post("/predict", {{"text", kOverpriced}}).second, pj);

  // Everything is gold, so proposing reports completion.
  auto [qc, qj] = post("/loop/propose", json::object());
  ASSERT_EQ(qc, 202);
  const json pjob = wait_job(qj["job"].get<uint64_t>());
  EXPECT_EQ(pjob["result"]["complete"], true);
}

TEST_F(ServiceTest, ModelIncrementProducesMetrics) {
  SynthConfig sc;
  sc.sentences = 30;
  const auto syn = synthesize(sc);
  auto [uc, uj] = post("/corpora", {{"format", "jsonl"}, {"data", records_to_jsonl(syn.records)}});
  ASSERT_EQ(uc, 201);
  auto [sc2, sj] = post("/loop/seed", {{"increment_size", 0.5}, {"lexicon", json::parse(syn.lexicon.to_json())}});
  ASSERT_EQ(sc2, 200) << sj.dump();
  accept_everything();
  EXPECT_EQ(get("/metrics").first, 404);
  auto job = wait_job(post("/loop/train", json::object()).second["job"].get<uint64_t>());
  ASSERT_EQ(job["status"], "done");
  job = wait_job(post("/loop/propose", json::object()).second["job"].get<uint64_t>());
  ASSERT_EQ(job["status"], "done") << job.dump();
  EXPECT_EQ(job["result"]["queued"], 15);
  // A second propose while items are pending is a conflict.
  job = wait_job(post("/loop/propose", json::object()).second["job"].get<uint64_t>());
  EXPECT_EQ(job["status"], "failed");
  EXPECT_EQ(job["error"]["code"], "conflict");
  accept_everything();
  auto [mc, mj] = get("/metrics");
  EXPECT_EQ(mc, 200);
  EXPECT_TRUE(mj.contains("token"));
  const json agr = get("/agreement").second;
  ASSERT_EQ(agr["increments"].size(), 2u);
  EXPECT_EQ(agr["increments"][1]["source"], "model");
  // Every queued item is resolved exactly once in the audit log.
  std::map<uint64_t, int> queued, resolved;
  const json audit = get("/audit").second;
  for (const auto& e : audit["entries"]) {
    if (e["type"] == "queue") ++queued[e["item"].get<uint64_t>()];
    if (e["type"] == "resolve" && e["resolved"] == true) ++resolved[e["item"].get<uint64_t>()];
  }
  EXPECT_EQ(queued.size(), 30u);
  EXPECT_EQ(queued, resolved);
}

TEST_F(ServiceTest, RequestLogWritten) {
  get("/health");
  get("/loop/state");
  const std::string log = read_file((dir_ / "requests.jsonl").string());
  size_t lines = 0;
  for (char c : log) lines += c == '\n';
  EXPECT_GE(lines, 2u);
  EXPECT_NE(log.find("\"/health\""), std::string::npos);
}

TEST_F(ServiceTest, AcceptedItemIsNotServedAgain) {
  upload_overpriced();
  seed_all();
  const json first = get("/review/next?reviewer=alice").second["item"];
  ASSERT_FALSE(first.is_null());
  ASSERT_EQ(post("/review/" + std::to_string(first["id"].get<uint64_t>()), accept_body(first)).first, 200);
  const json second = get("/review/next?reviewer=alice").second["item"];
  ASSERT_FALSE(second.is_null());
  EXPECT_NE(second["id"], first["id"]);
  for (const auto& t : second["tokens"]) {
    EXPECT_TRUE(t.contains("p_bias"));
    EXPECT_TRUE(t.contains("start"));
  }
}
