#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "biasner/error.hpp"
#include "biasner/service.hpp"
#include "biasner/synthetic.hpp"
#include "oracles.hpp"

using namespace biasner;
namespace fs = std::filesystem;

namespace {

Session sample_session(bool with_model) {
  SynthConfig c;
  c.sentences = 20;
  const auto syn = synthesize(c);
  Session s;
  s.corpora.emplace_back("c1", syn.records);
  LoopState loop = make_loop(syn.records, {});
  int tick = 0;
  Clock clock = [&] { return "t" + std::to_string(++tick); };
  seed_increment(loop, syn.lexicon, clock);
  for (size_t i = 0; i < 3; ++i) {
    Resolution r;
    r.reviewer = "r";
    r.version = loop.items[i].version;
    r.decisions.assign(loop.items[i].spans.size(), SpanDecision{});
    resolve(loop, loop.items[i].id, r, clock);
  }
  if (with_model) {
    std::vector<std::vector<Token>> toks;
    for (const auto& snt : loop.sentences) toks.push_back(snt.tokens);
    s.vocab = build_vocab(toks);
    ModelConfig mc;
    mc.vocab_size = s.vocab->size();
    mc.d_model = 8;
    mc.n_heads = 2;
    mc.d_k = 4;
    mc.d_ff = 8;
    mc.n_layers = 1;
    s.model = init_model(mc, 2);
    log_training(loop, gold_ids(loop), model_checksum(*s.model), clock);
    s.metrics_json = "{\"token\":{\"f1\":0.5}}";
  }
  s.loop = std::move(loop);
  return s;
}

size_t snapshot_file_count(const fs::path& dir) {
  const auto cur = dir / "snapshots" / std::to_string(std::stoul(read_file((dir / "CURRENT").string())));
  size_t n = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(cur)) ++n;
  return n;
}

}  // namespace

TEST(Workspace, EmptyDirectoryRestoresEmptySession) {
  const auto dir = oracle::temp_dir("ws");
  EXPECT_EQ(restore(dir.string()), Session{});
  EXPECT_EQ(restore((dir / "missing").string()), Session{});
  fs::remove_all(dir);
}

TEST(Workspace, RoundTrip) {
  const auto dir = oracle::temp_dir("ws");
  for (bool with_model : {false, true}) {
    const Session s = sample_session(with_model);
    persist(dir.string(), s);
    EXPECT_EQ(restore(dir.string()), s);
  }
  fs::remove_all(dir);
}

TEST(Workspace, PoolFilesMatchState) {
  const auto dir = oracle::temp_dir("ws");
  const Session s = sample_session(true);
  persist(dir.string(), s);
  const auto cur = dir / "snapshots" / std::to_string(std::stoul(read_file((dir / "CURRENT").string())));
  for (const char* f : {"manifest.json", "state.json", "audit.jsonl", "gold.conll", "gold.ids", "proposed.conll",
                        "raw.conll", "model.bin", "model.vocab", "metrics.json", "corpora.json"})
    EXPECT_TRUE(fs::exists(cur / f)) << f;
  std::ifstream audit(cur / "audit.jsonl");
  size_t lines = 0;
  for (std::string line; std::getline(audit, line);) ++lines;
  EXPECT_EQ(lines, s.loop->audit.size());
  std::ifstream ids(cur / "gold.ids");
  size_t gold = 0;
  for (std::string line; std::getline(ids, line);) gold += !line.empty();
  EXPECT_EQ(gold, s.loop->count(Pool::kGold));
  fs::remove_all(dir);
}

TEST(Workspace, InterruptedWriteKeepsPreviousSnapshot) {
  const auto dir = oracle::temp_dir("ws");
  const Session before = sample_session(false);
  persist(dir.string(), before);
  const Session after = sample_session(true);
  // One tick per snapshot file plus the CURRENT swap.
  const size_t ticks = snapshot_file_count(dir) + 3;
  for (size_t k = 0; k < ticks; ++k) {
    bool threw = false;
    try {
      persist(dir.string(), after, PersistOptions{k});
    } catch (const Error& e) {
      threw = true;
      EXPECT_EQ(e.kind(), ErrorKind::kIo);
    }
    const Session got = restore(dir.string());
    if (threw) {
      EXPECT_EQ(got, before) << "fault before file " << k;
      EXPECT_EQ(got.loop->count(Pool::kGold), before.loop->count(Pool::kGold));
    } else {
      EXPECT_EQ(got, after);
      persist(dir.string(), before);
    }
  }
  fs::remove_all(dir);
}

TEST(Workspace, TamperingIsDetected) {
  const auto dir = oracle::temp_dir("ws");
  persist(dir.string(), sample_session(true));
  const auto cur = dir / "snapshots" / std::to_string(std::stoul(read_file((dir / "CURRENT").string())));
  std::string gold = read_file((cur / "gold.conll").string());
  gold[0] = gold[0] == 'x' ? 'y' : 'x';
  std::ofstream((cur / "gold.conll").string(), std::ios::binary) << gold;
  try {
    restore(dir.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kLoad);
    EXPECT_NE(std::string(e.what()).find("gold.conll"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Workspace, OldSnapshotsPruned) {
  const auto dir = oracle::temp_dir("ws");
  const Session s = sample_session(false);
  for (int i = 0; i < 5; ++i) persist(dir.string(), s);
  size_t snaps = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "snapshots")) ++snaps;
  EXPECT_LE(snaps, 2u);
  EXPECT_EQ(restore(dir.string()), s);
  fs::remove_all(dir);
}

TEST(ServiceConfig, JsonAndUnknownKeys) {
  const auto c = ServiceConfig::from_json(
      R"({"port":0,"workspace":"/tmp/x","model":{"d_model":16,"n_heads":2,"d_k":8},"hyper":{"epochs":3,"optimizer":"sgd"}})");
  EXPECT_EQ(c.port, 0);
  EXPECT_EQ(c.model.d_model, 16u);
  EXPECT_EQ(c.hyper.epochs, 3u);
  EXPECT_EQ(c.hyper.optimizer, Optimizer::kSgdMomentum);
  try {
    ServiceConfig::from_json(R"({"prot":1})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}
