#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasner/text.hpp"

namespace biasner {

enum class Label : uint8_t { kNonBiased, kBiased };

std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view text);

inline constexpr std::string_view kUnspecifiedAspect = "unspecified";

// One consolidated sample.
struct Record {
  std::string dataset;
  std::string text;
  std::vector<std::string> biased_words;
  std::string aspect_of_bias{kUnspecifiedAspect};
  Label label = Label::kNonBiased;

  // label == biased exactly when biased_words is non-empty.
  bool consistent() const { return (label == Label::kBiased) == !biased_words.empty(); }
  bool operator==(const Record&) const = default;
};

enum class Scheme : uint8_t { kBio, kCollapsed };

enum class Tag : uint8_t { kO, kBeginBias, kInsideBias, kBias };

std::string_view tag_name(Tag tag);
std::optional<Tag> parse_tag(std::string_view text);

enum class Provenance : uint8_t { kLexicon, kModel, kHuman };

std::string_view provenance_name(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view text);

// Half-open token range [begin, end).
struct Span {
  size_t begin = 0;
  size_t end = 0;

  size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
};

struct TaggedSentence {
  std::string text;  // original text the token offsets point into
  std::vector<Token> tokens;
  std::vector<Tag> tags;
  Scheme scheme = Scheme::kBio;
  std::vector<Provenance> provenance;

  size_t size() const { return tokens.size(); }
  bool operator==(const TaggedSentence&) const = default;
};

// Throws kValidation naming the first offending index.
void validate(const TaggedSentence& s);

// Builds a bio sentence from token spans. Overlapping spans are merged;
// touching spans stay separate entities (each opens with B-BIAS).
TaggedSentence bio_from_spans(std::string text, std::vector<Token> tokens,
                              std::span<const Span> spans, Provenance provenance);

// Maximal BIAS runs (collapsed) or B/I runs (bio).
std::vector<Span> spans_of(const TaggedSentence& s);

TaggedSentence collapse_tags(const TaggedSentence& bio);
TaggedSentence expand_tags(const TaggedSentence& collapsed);

// Whether a token is part of a bias span, in either scheme.
inline bool is_bias(Tag t) { return t != Tag::kO; }

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<Record> train;
  std::vector<Record> dev;
  std::vector<Record> test;
};

// Partition sizes: floor(N * ratio) for dev and test (at least one item for
// any positive ratio), the remainder to train. Each partition's quota is
// spread over label strata by largest remainder; order within a stratum is a
// seeded shuffle.
CorpusSplit split_corpus(std::span<const Record> records, const SplitRatios& ratios, uint64_t seed);

}  // namespace biasner
