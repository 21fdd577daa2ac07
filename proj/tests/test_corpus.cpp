#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "biasner/error.hpp"
#include "biasner/ingest.hpp"

using namespace biasner;

namespace {

Record rec(std::string text, std::vector<std::string> words, std::string dataset = "d") {
  Record r;
  r.dataset = std::move(dataset);
  r.text = std::move(text);
  r.biased_words = std::move(words);
  r.label = r.biased_words.empty() ? Label::kNonBiased : Label::kBiased;
  return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kState;
}

}  // namespace

TEST(Ingest, JsonlBasic) {
  std::istringstream in(
      R"({"Dataset":"news","Text":"Women are bad drivers.","BiasedWords":"bad drivers","AspectOfBias":"gender","Label":"biased"}
{"Dataset":"news","Text":"The sky is blue.","BiasedWords":[],"Label":"non-biased"}
)");
  const auto r = ingest_jsonl(in);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.rows_read, 2u);
  EXPECT_EQ(r.records[0].biased_words, std::vector<std::string>{"bad drivers"});
  EXPECT_EQ(r.records[0].label, Label::kBiased);
  EXPECT_EQ(r.records[1].aspect_of_bias, kUnspecifiedAspect);
  EXPECT_EQ(r.inconsistent, 0u);
}

TEST(Ingest, WrappedRecordIsUnwrapped) {
  std::istringstream in(R"({"Record":{"Text":"hello","BiasedWords":["a","b"]}})"
                        "\n");
  const auto r = ingest_jsonl(in);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].biased_words, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(r.records[0].dataset, "unknown");
}

TEST(Ingest, EmptyTextDropped) {
  std::istringstream in(R"({"Text":"  "}
{"Text":"kept"}
)");
  const auto r = ingest_jsonl(in);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.dropped_empty, 1u);
}

TEST(Ingest, InconsistentLabelCounted) {
  std::istringstream in(R"({"Text":"x","Label":"biased"})"
                        "\n");
  const auto r = ingest_jsonl(in);
  EXPECT_EQ(r.inconsistent, 1u);
}

TEST(Ingest, MalformedJsonIsParseOrIngestError) {
  std::istringstream in("{not json}\n");
  const ErrorKind k = kind_of([&] { ingest_jsonl(in); });
  EXPECT_TRUE(k == ErrorKind::kParse || k == ErrorKind::kIngest);
}

TEST(Ingest, MissingMappedKeyIsConfigError) {
  std::istringstream in(R"({"Text":"x"})"
                        "\n");
  ColumnMap m;
  m.text = "Body";
  EXPECT_EQ(kind_of([&] { ingest_jsonl(in, m); }), ErrorKind::kConfig);
}

TEST(Ingest, CsvQuoting) {
  std::istringstream in("Dataset,Text,BiasedWords,Label\n"
                        "a,\"Hello, \"\"quoted\"\" world\",\"x, y\",biased\n"
                        "a,\"multi\nline\",,\n");
  const auto r = ingest_delimited(in, ',');
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].text, "Hello, \"quoted\" world");
  EXPECT_EQ(r.records[0].biased_words, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(r.records[1].text, "multi\nline");
  EXPECT_EQ(r.records[1].label, Label::kNonBiased);
}

TEST(Ingest, TsvWithColumnMap) {
  std::istringstream in("body\tbias\n"
                        "A sentence\tbad\n");
  const ColumnMap m = column_map_from_json(R"({"text":"body","biased_words":"bias","dataset":"","label":"","aspect_of_bias":""})");
  const auto r = ingest_delimited(in, '\t', m);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].biased_words, std::vector<std::string>{"bad"});
  EXPECT_EQ(r.records[0].label, Label::kBiased);
}

TEST(Ingest, ColumnMapUnknownKey) {
  EXPECT_EQ(kind_of([] { column_map_from_json(R"({"txt":"a"})"); }), ErrorKind::kConfig);
}

TEST(Ingest, JsonlRoundTrip) {
  std::vector<Record> recs{rec("One, two.", {"two"}, "a"), rec("Three", {}, "b")};
  recs[0].aspect_of_bias = "gender";
  std::istringstream in(records_to_jsonl(recs));
  EXPECT_EQ(ingest_jsonl(in).records, recs);
}

TEST(Ingest, SplitPhraseList) {
  EXPECT_EQ(split_phrase_list(" a , b c ,, "), (std::vector<std::string>{"a", "b c"}));
  EXPECT_TRUE(split_phrase_list("").empty());
}

TEST(Labels, NamesRoundTrip) {
  for (Label l : {Label::kBiased, Label::kNonBiased}) EXPECT_EQ(parse_label(label_name(l)), l);
  for (Tag t : {Tag::kO, Tag::kBeginBias, Tag::kInsideBias, Tag::kBias}) EXPECT_EQ(parse_tag(tag_name(t)), t);
  EXPECT_FALSE(parse_tag("B-PER").has_value());
}

TEST(Sentence, BioFromSpansMergesOverlapsKeepsTouching) {
  const std::string text = "a b c d e f";
  const Span spans[] = {{0, 2}, {1, 3}, {3, 4}};
  const auto s = bio_from_spans(text, tokenize(text), spans, Provenance::kHuman);
  EXPECT_EQ(s.tags, (std::vector<Tag>{Tag::kBeginBias, Tag::kInsideBias, Tag::kInsideBias, Tag::kBeginBias,
                                      Tag::kO, Tag::kO}));
  EXPECT_EQ(spans_of(s), (std::vector<Span>{{0, 3}, {3, 4}}));
  EXPECT_NO_THROW(validate(s));
}

TEST(Sentence, CollapseExpandRoundTripOnNonTouchingSpans) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const size_t n = 1 + rng() % 12;
    for (size_t i = 0; i < n; ++i) text += "w ";
    std::vector<Span> spans;
    size_t pos = rng() % 3;
    while (pos < n) {
      const size_t len = 1 + rng() % 3;
      const size_t end = std::min(n, pos + len);
      spans.push_back({pos, end});
      pos = end + 1 + rng() % 3;
    }
    const auto bio = bio_from_spans(text, tokenize(text), spans, Provenance::kLexicon);
    const auto col = collapse_tags(bio);
    EXPECT_NO_THROW(validate(col));
    EXPECT_EQ(expand_tags(col), bio);
    EXPECT_EQ(spans_of(col), spans);
    EXPECT_EQ(spans_of(bio), spans);
  }
}

TEST(Sentence, ValidateRejectsOrphanInside) {
  const std::string text = "a b";
  auto s = bio_from_spans(text, tokenize(text), {}, Provenance::kHuman);
  s.tags[0] = Tag::kInsideBias;
  try {
    validate(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("index 0"), std::string::npos);
  }
}

TEST(Sentence, ValidateRejectsLengthMismatch) {
  const std::string text = "a b";
  auto s = bio_from_spans(text, tokenize(text), {}, Provenance::kHuman);
  s.tags.pop_back();
  EXPECT_EQ(kind_of([&] { validate(s); }), ErrorKind::kValidation);
}

TEST(Split, TenRecordsGivesEightOneOne) {
  std::vector<Record> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(rec("t" + std::to_string(i), i % 2 ? std::vector<std::string>{"x"} : std::vector<std::string>{}));
  const auto s = split_corpus(recs, {}, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.dev.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, PartitionIsDisjointCoverAndDeterministic) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 3 + rng() % 200;
    std::vector<Record> recs;
    for (size_t i = 0; i < n; ++i)
      recs.push_back(rec("t" + std::to_string(i), rng() % 3 == 0 ? std::vector<std::string>{"x"} : std::vector<std::string>{}));
    const uint64_t seed = rng();
    const auto s = split_corpus(recs, {}, seed);
    EXPECT_EQ(s.dev.size(), std::max<size_t>(1, n / 10));
    EXPECT_EQ(s.test.size(), std::max<size_t>(1, n / 10));
    std::map<std::string, int> count;
    for (const auto* part : {&s.train, &s.dev, &s.test})
      for (const auto& r : *part) ++count[r.text];
    EXPECT_EQ(count.size(), n);
    for (const auto& [_, c] : count) EXPECT_EQ(c, 1);
    const auto again = split_corpus(recs, {}, seed);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.test, s.test);
  }
}

TEST(Split, StratifiedLabelShare) {
  std::vector<Record> recs;
  for (int i = 0; i < 100; ++i) recs.push_back(rec("t" + std::to_string(i), i < 30 ? std::vector<std::string>{"x"} : std::vector<std::string>{}));
  const auto s = split_corpus(recs, {}, 4);
  size_t biased = 0;
  for (const auto& r : s.test) biased += r.label == Label::kBiased;
  EXPECT_EQ(biased, 3u);
}

TEST(Split, Errors) {
  std::vector<Record> two{rec("a", {}), rec("b", {})};
  EXPECT_EQ(kind_of([&] { split_corpus(two, {}, 1); }), ErrorKind::kSplit);
  std::vector<Record> ten(10, rec("a", {}));
  EXPECT_EQ(kind_of([&] { split_corpus(ten, {0.5, 0.2, 0.2}, 1); }), ErrorKind::kContract);
  EXPECT_EQ(kind_of([&] { split_corpus(ten, {0.0, 0.5, 0.5}, 1); }), ErrorKind::kContract);
}
