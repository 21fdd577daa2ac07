#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "biasner/bootstrap.hpp"
#include "biasner/error.hpp"
#include "biasner/synthetic.hpp"
#include "oracles.hpp"

using namespace biasner;

namespace {

Clock counter_clock() {
  auto n = std::make_shared<int>(0);
  return [n] { return "t" + std::to_string(++*n); };
}

std::vector<Record> small_corpus(size_t n, uint64_t seed = 3) {
  SynthConfig c;
  c.sentences = n;
  c.seed = seed;
  return synthesize(c).records;
}

Resolution accept_all(const ReviewItem& it, const std::string& reviewer = "r") {
  Resolution r;
  r.reviewer = reviewer;
  r.version = it.version;
  r.decisions.assign(it.spans.size(), SpanDecision{Action::kAccept, {}});
  return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error";
  return ErrorKind::kIo;
}

LoopRunConfig tiny_run() {
  LoopRunConfig run;
  run.model.d_model = 8;
  run.model.n_heads = 2;
  run.model.d_k = 4;
  run.model.d_ff = 8;
  run.model.n_layers = 1;
  run.hyper.epochs = 1;
  return run;
}

}  // namespace

TEST(Increments, CumulativeTarget) {
  for (size_t k = 1; k <= 5; ++k) EXPECT_EQ(cumulative_target(100, 0.2, k), 20 * k);
  EXPECT_EQ(cumulative_target(100, 0.2, 6), 100u);
  EXPECT_EQ(cumulative_target(7, 0.3, 1), 3u);
  EXPECT_EQ(cumulative_target(7, 0.3, 2), 5u);
  EXPECT_EQ(cumulative_target(7, 0.3, 3), 7u);
  for (size_t n = 1; n < 60; ++n)
    for (double s : {0.05, 0.1, 0.25, 1.0 / 3.0, 0.5, 1.0})
      for (size_t k = 0; k < 25; ++k)
        EXPECT_EQ(cumulative_target(n, s, k),
                  std::min<size_t>(n, static_cast<size_t>(std::ceil(k * s * n - 1e-9))));
}

TEST(MakeLoop, OrderIsStratifiedPermutation) {
  const auto recs = small_corpus(90);
  const auto s = make_loop(recs, {});
  ASSERT_EQ(s.order.size(), 90u);
  std::vector<size_t> sorted = s.order;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < 90; ++i) EXPECT_EQ(sorted[i], i);
  std::map<std::string, double> total;
  for (const auto& r : recs) total[r.dataset] += 1;
  std::map<std::string, double> seen;
  for (size_t k = 0; k < 90; ++k) {
    seen[recs[s.order[k]].dataset] += 1;
    for (const auto& [d, t] : total) EXPECT_LT(std::abs(seen[d] - (k + 1) * t / 90.0), 1.0 + 1e-9) << k << d;
  }
  EXPECT_EQ(s.count(Pool::kRaw), 90u);
  EXPECT_NO_THROW(s.check_invariants());
}

TEST(MakeLoop, Errors) {
  EXPECT_EQ(kind_of([] { make_loop({}, {}); }), ErrorKind::kContract);
  LoopConfig c;
  c.increment_size = 0;
  EXPECT_EQ(kind_of([&] { make_loop(small_corpus(5), c); }), ErrorKind::kContract);
}

TEST(Seed, QueuesLexiconProposals) {
  const auto syn = [] {
    SynthConfig c;
    c.sentences = 50;
    return synthesize(c);
  }();
  auto s = make_loop(syn.records, {});
  seed_increment(s, syn.lexicon, counter_clock());
  EXPECT_EQ(s.items.size(), 10u);
  EXPECT_EQ(s.count(Pool::kProposed), 10u);
  EXPECT_EQ(s.pending(), 10u);
  for (const auto& it : s.items) {
    EXPECT_EQ(it.proposed.tags, syn.gold[it.sentence].tags);
    for (const Span& sp : it.spans)
      for (size_t i = sp.begin; i < sp.end; ++i) EXPECT_EQ(it.p_bias[i], 1.0);
    EXPECT_EQ(it.proposed.provenance.front(), Provenance::kLexicon);
  }
  EXPECT_EQ(kind_of([&] { seed_increment(s, syn.lexicon); }), ErrorKind::kContract);
  EXPECT_NO_THROW(s.check_invariants());
}

TEST(Resolve, AcceptEditAdd) {
  const std::vector<Record> recs{{"d", "Women are bad drivers and rude people.", {}, "x", Label::kNonBiased}};
  Lexicon lex;
  lex.add("g", "bad drivers");
  LoopConfig cfg;
  cfg.increment_size = 1.0;
  auto s = make_loop(recs, cfg);
  seed_increment(s, lex, counter_clock());
  const ReviewItem& it = s.items[0];
  ASSERT_EQ(it.spans, (std::vector<Span>{{2, 4}}));
  Resolution r;
  r.reviewer = "r";
  r.version = 0;
  r.decisions = {{Action::kEdit, {{3, 4}}}};
  r.added = {{5, 6}};
  const auto out = resolve(s, 1, r, counter_clock());
  EXPECT_TRUE(out.resolved);
  EXPECT_EQ(out.version, 1u);
  ASSERT_TRUE(s.gold[0].has_value());
  EXPECT_EQ(spans_of(*s.gold[0]), (std::vector<Span>{{3, 4}, {5, 6}}));
  EXPECT_EQ(s.pool[0], Pool::kGold);
  EXPECT_EQ(s.audit.back().final_spans, (std::vector<Span>{{3, 4}, {5, 6}}));
  // Proposal tags O O B I O O O O vs gold O O O B O B O O: oracle kappa on BIAS/O.
  const auto& ag = s.increments[0].agreement;
  ASSERT_TRUE(ag.has_value());
  // tokens: both O = 5, prop B gold O = 1, prop O gold B = 1, both B = 1
  EXPECT_NEAR(ag->kappa, oracle::kappa_2x2(5, 1, 1, 1), 1e-12);
}

TEST(Resolve, StaleAndIdempotent) {
  Lexicon lex;
  lex.add("g", "bad");
  const std::vector<Record> recs{{"d", "bad one", {}, "x", Label::kNonBiased}};
  LoopConfig cfg;
  cfg.increment_size = 1.0;
  auto s = make_loop(recs, cfg);
  seed_increment(s, lex);
  auto stale = accept_all(s.items[0]);
  stale.version = 5;
  const LoopState before = s;
  EXPECT_EQ(kind_of([&] { resolve(s, 1, stale); }), ErrorKind::kState);
  EXPECT_EQ(s, before);
  EXPECT_EQ(kind_of([&] { resolve(s, 2, accept_all(s.items[0])); }), ErrorKind::kState);
  Resolution wrong = accept_all(s.items[0]);
  wrong.decisions.clear();
  EXPECT_EQ(kind_of([&] { resolve(s, 1, wrong); }), ErrorKind::kContract);
  Resolution oob = accept_all(s.items[0]);
  oob.added = {{1, 3}};
  EXPECT_EQ(kind_of([&] { resolve(s, 1, oob); }), ErrorKind::kContract);
  EXPECT_EQ(s, before);
  resolve(s, 1, accept_all(s.items[0]));
  const size_t audit_len = s.audit.size();
  EXPECT_EQ(kind_of([&] { resolve(s, 1, accept_all(s.items[0])); }), ErrorKind::kState);
  EXPECT_EQ(s.audit.size(), audit_len);
}

TEST(Resolve, ConsensusNeedsAgreement) {
  Lexicon lex;
  lex.add("g", "bad");
  const std::vector<Record> recs{{"d", "bad one", {}, "x", Label::kNonBiased}};
  LoopConfig cfg;
  cfg.increment_size = 1.0;
  cfg.reviewers = {"ann", "bob"};
  auto s = make_loop(recs, cfg);
  seed_increment(s, lex);
  EXPECT_EQ(kind_of([&] { resolve(s, 1, accept_all(s.items[0], "eve")); }), ErrorKind::kContract);
  auto o1 = resolve(s, 1, accept_all(s.items[0], "ann"));
  EXPECT_FALSE(o1.resolved);
  Resolution rej = accept_all(s.items[0], "bob");
  rej.decisions[0].action = Action::kReject;
  auto o2 = resolve(s, 1, rej);
  EXPECT_FALSE(o2.resolved);
  EXPECT_NE(s.items[0].note.find("disagree"), std::string::npos);
  EXPECT_EQ(s.pool[0], Pool::kProposed);
  auto o3 = resolve(s, 1, accept_all(s.items[0], "bob"));
  EXPECT_TRUE(o3.resolved);
  EXPECT_EQ(spans_of(*s.gold[0]), (std::vector<Span>{{0, 1}}));
}

TEST(Training, LogRejectsNonGold) {
  auto s = make_loop(small_corpus(10), {});
  EXPECT_EQ(kind_of([&] { log_training(s, {0}, 1); }), ErrorKind::kState);
}

TEST(Propose, RequiresResolvedQueue) {
  const auto syn = [] {
    SynthConfig c;
    c.sentences = 20;
    return synthesize(c);
  }();
  auto s = make_loop(syn.records, {});
  seed_increment(s, syn.lexicon);
  ModelConfig mc = tiny_run().model;
  mc.vocab_size = 10;
  const auto p = init_model(mc, 1);
  EXPECT_EQ(kind_of([&] { propose_increment(s, p, Vocab{}); }), ErrorKind::kState);
}

TEST(RunLoop, ReplayAndTrainingProvenance) {
  const auto syn = [] {
    SynthConfig c;
    c.sentences = 40;
    c.seed = 9;
    return synthesize(c);
  }();
  auto s = make_loop(syn.records, {});
  const auto result = run_loop(s, syn.lexicon, reference_resolver(syn.gold), tiny_run(), counter_clock());
  EXPECT_EQ(s.count(Pool::kGold), 40u);
  EXPECT_EQ(s.increments.size(), 5u);
  for (const auto& inc : s.increments) {
    EXPECT_EQ(inc.items, 8u);
    EXPECT_TRUE(inc.agreement.has_value());
  }
  EXPECT_EQ(s.increments[0].source, Provenance::kLexicon);
  EXPECT_EQ(s.increments[1].source, Provenance::kModel);
  for (size_t i = 0; i < 40; ++i) EXPECT_EQ(s.gold[i]->tags, syn.gold[i].tags);
  // Training sets only ever hold sentences resolved before the train entry.
  std::set<size_t> resolved;
  size_t trains = 0;
  for (const auto& e : s.audit) {
    if (e.type == AuditEntry::Type::kResolve && e.resolved) resolved.insert(e.sentence);
    if (e.type == AuditEntry::Type::kTrain) {
      ++trains;
      for (size_t id : e.training_set) EXPECT_TRUE(resolved.count(id));
      EXPECT_EQ(e.training_set.size(), resolved.size());
    }
  }
  EXPECT_EQ(trains, 5u);
  EXPECT_EQ(s.model_checksum, model_checksum(result.model));
  const auto replayed = replay(syn.records, s.config, s.audit);
  EXPECT_EQ(replayed, s);
  EXPECT_EQ(kappa_series(s).size(), 5u);
}

TEST(RunLoop, ResolverLeavingItemsOpen) {
  const auto syn = [] {
    SynthConfig c;
    c.sentences = 10;
    return synthesize(c);
  }();
  LoopConfig cfg;
  cfg.reviewers = {"a", "b"};
  auto s = make_loop(syn.records, cfg);
  // Each reviewer votes differently, so consensus never forms.
  Resolver split = [](const LoopState&, const ReviewItem& it, const std::string& reviewer) {
    Resolution r = accept_all(it, reviewer);
    if (reviewer == "b") r.added = {{0, 1}};
    return r;
  };
  try {
    run_loop(s, syn.lexicon, split, tiny_run());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kState);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(Serialization, StateAndAuditRoundTrip) {
  const auto syn = [] {
    SynthConfig c;
    c.sentences = 20;
    return synthesize(c);
  }();
  LoopConfig cfg;
  cfg.reviewers = {"a", "b"};
  auto s = make_loop(syn.records, cfg);
  seed_increment(s, syn.lexicon, counter_clock());
  resolve(s, 1, accept_all(s.items[0], "a"), counter_clock());
  resolve(s, 1, accept_all(s.items[0], "b"), counter_clock());
  Resolution r = accept_all(s.items[1], "a");
  r.note = "unsure";
  resolve(s, 2, r, counter_clock());
  EXPECT_EQ(loop_state_from_json(loop_state_to_json(s)), s);
  for (const auto& e : s.audit) EXPECT_EQ(audit_entry_from_json(audit_entry_to_json(e)), e);
  EXPECT_EQ(replay(syn.records, cfg, s.audit), s);
}

TEST(Resolvers, AutoAcceptThreshold) {
  ReviewItem it;
  it.spans = {{0, 1}, {1, 3}};
  it.p_bias = {0.95, 0.97, 0.5};
  const auto r = auto_accept_resolver(0.9)(LoopState{}, it, "x");
  ASSERT_EQ(r.decisions.size(), 2u);
  EXPECT_EQ(r.decisions[0].action, Action::kAccept);
  EXPECT_EQ(r.decisions[1].action, Action::kReject);
}
