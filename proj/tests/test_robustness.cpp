#include <gtest/gtest.h>

#include <random>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/eval.hpp"

using namespace biasner;

namespace {

std::string span_text(const std::string& text, const Span& s) {
  const auto t = tokenize(text);
  return text.substr(t[s.begin].start, t[s.end - 1].end - t[s.begin].start);
}

}  // namespace

TEST(Perturb, SpellingDoublesOrSplits) {
  const std::string text = "Conservative views are superior.";
  const Span sp[] = {{3, 4}};
  std::set<std::string> seen;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const auto c = perturb(text, sp, PerturbKind::kSpelling, PerturbResources::bundled(), seed);
    ASSERT_TRUE(c.has_value());
    seen.insert(span_text(c->perturbed, c->expected_spans[0]));
  }
  EXPECT_TRUE(seen.count("superrior"));
  EXPECT_TRUE(seen.count("su perior"));
}

TEST(Perturb, SemanticsSwapsSynonym) {
  const std::string text = "Women are not fit for leadership roles.";
  const Span sp[] = {{2, 4}};
  const auto c = perturb(text, sp, PerturbKind::kSemantics, PerturbResources::bundled(), 1);
  ASSERT_TRUE(c.has_value());
  EXPECT_NE(c->perturbed, text);
  EXPECT_EQ(c->expected_spans.size(), 1u);
}

TEST(Perturb, CaseUppercasesSpanWord) {
  const std::string text = "Asians are more prone to diabetes.";
  const Span sp[] = {{2, 4}};
  const auto c = perturb(text, sp, PerturbKind::kCase, PerturbResources::bundled(), 3);
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->perturbed.size(), text.size());
  EXPECT_EQ(ascii_lower(c->perturbed), ascii_lower(text));
  const std::string changed = span_text(c->perturbed, c->expected_spans[0]);
  EXPECT_NE(changed, span_text(text, sp[0]));
}

TEST(Perturb, ContextRemovesAdverbAndShiftsSpans) {
  const std::string text = "They severely lack skills.";
  const Span sp[] = {{2, 4}};
  const auto c = perturb(text, sp, PerturbKind::kContext, PerturbResources::bundled(), 0);
  ASSERT_TRUE(c.has_value());
  EXPECT_EQ(c->perturbed, "They lack skills.");
  EXPECT_EQ(c->expected_spans, (std::vector<Span>{{1, 3}}));
}

TEST(Perturb, SpansStayAligned) {
  std::mt19937_64 rng(1);
  const auto suite = worked_robustness_suite();
  for (const auto& base : suite)
    for (PerturbKind k : {PerturbKind::kSpelling, PerturbKind::kSemantics, PerturbKind::kCase, PerturbKind::kContext})
      for (int i = 0; i < 10; ++i) {
        const auto c = perturb(base.original, base.original_spans, k, PerturbResources::bundled(), rng());
        if (!c) continue;
        const size_t n = tokenize(c->perturbed).size();
        ASSERT_EQ(c->expected_spans.size(), base.original_spans.size());
        for (const Span& s : c->expected_spans) {
          EXPECT_LT(s.begin, s.end);
          EXPECT_LE(s.end, n);
        }
      }
}

TEST(Perturb, SkipSignal) {
  EXPECT_FALSE(perturb("", {}, PerturbKind::kSpelling, PerturbResources::bundled(), 1).has_value());
  EXPECT_FALSE(perturb("zzz qqq", {}, PerturbKind::kSemantics, PerturbResources::bundled(), 1).has_value());
  const Span bad[] = {{0, 9}};
  EXPECT_THROW(perturb("a b", bad, PerturbKind::kCase, PerturbResources::bundled(), 1), Error);
}

TEST(Verdict, Counting) {
  const std::vector<Tag> tags{Tag::kBias, Tag::kBias, Tag::kO, Tag::kBias};
  const std::vector<Span> both{{0, 2}, {3, 4}}, mixed{{0, 2}, {2, 3}}, none{{2, 3}}, partial{{1, 3}};
  size_t kept = 0;
  EXPECT_EQ(verdict_for(tags, both, &kept), Verdict::kPass);
  EXPECT_EQ(kept, 2u);
  EXPECT_EQ(verdict_for(tags, mixed, &kept), Verdict::kPartial);
  EXPECT_EQ(kept, 1u);
  EXPECT_EQ(verdict_for(tags, none), Verdict::kFail);
  EXPECT_EQ(verdict_for(tags, partial), Verdict::kFail);
}

TEST(Suite, SpansPointAtBiasedWords) {
  const auto suite = worked_robustness_suite();
  ASSERT_EQ(suite.size(), 5u);
  EXPECT_EQ(span_text(suite[0].original, suite[0].original_spans[0]), "superior");
  EXPECT_EQ(span_text(suite[0].perturbed, suite[0].expected_spans[1]), "un like");
  EXPECT_EQ(span_text(suite[2].perturbed, suite[2].expected_spans[0]), "higher susceptibility");
  EXPECT_EQ(span_text(suite[4].perturbed, suite[4].expected_spans[0]), "resistant");
}

TEST(Report, PerKindCountsAreHandCount) {
  const auto dir = std::string(BIASNER_FIXTURES);
  const auto model = load_model(dir + "/robustness_model.bin");
  const auto vocab = load_vocab(dir + "/robustness_model.bin.vocab");
  const auto expected = nlohmann::json::parse(read_file(dir + "/robustness_verdicts.json"));
  const auto report = run_robustness(model, vocab, worked_robustness_suite());
  ASSERT_EQ(report.cases.size(), 5u);
  std::map<PerturbKind, KindCounts> hand;
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(verdict_name(report.cases[i].verdict), expected["verdicts"][i].get<std::string>());
    auto& k = hand[report.cases[i].kind];
    (report.cases[i].verdict == Verdict::kPass ? k.pass
     : report.cases[i].verdict == Verdict::kPartial ? k.partial
                                                   : k.fail)++;
  }
  ASSERT_EQ(report.per_kind.size(), 4u);
  for (const auto& [kind, counts] : report.per_kind) {
    EXPECT_EQ(counts.pass, hand[kind].pass);
    EXPECT_EQ(counts.partial, hand[kind].partial);
    EXPECT_EQ(counts.fail, hand[kind].fail);
  }
  const auto j = nlohmann::json::parse(report.to_json());
  EXPECT_EQ(j["cases"].size(), 5u);
}
