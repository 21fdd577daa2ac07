#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biasner/corpus.hpp"
#include "biasner/lexicon.hpp"

namespace biasner {

// Generator for corpora with lexicon-planted bias spans. Sentences are built
// from pseudo-word fillers plus planted phrases of 1..3 tokens. Words of the
// multi-token phrases also occur on their own in neutral positions ("decoys"),
// so they can only be tagged correctly by looking at their neighbours.
struct SynthConfig {
  size_t sentences = 2000;
  size_t fillers = 400;  // distinct filler words
  size_t min_words = 6;
  size_t max_words = 14;
  double biased_fraction = 0.6;
  double decoy_rate = 0.6;  // chance of a decoy word per sentence
  std::vector<std::string> datasets = {"news", "health", "hiring"};
  uint64_t seed = 1;
};

struct SynthCorpus {
  std::vector<Record> records;
  std::vector<TaggedSentence> gold;  // bio, one per record
  Lexicon lexicon;                   // every planted phrase
};

// The planted phrases, grouped by bias dimension.
Lexicon synthetic_lexicon();

SynthCorpus synthesize(const SynthConfig& config);

}  // namespace biasner
