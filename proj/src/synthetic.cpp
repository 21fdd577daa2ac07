#include "biasner/synthetic.hpp"

#include <algorithm>
#include <array>

#include "biasner/error.hpp"
#include "biasner/rng.hpp"

namespace biasner {

namespace {

struct Planted {
  const char* dimension;
  const char* phrase;
};

// Multi-token phrases reuse words that also appear as decoys.
constexpr std::array kPlanted = {
    Planted{"gender", "hysterical"},        Planted{"gender", "too emotional"},
    Planted{"gender", "not fit"},           Planted{"race", "thugs"},
    Planted{"race", "model minority"},      Planted{"race", "exotic looking"},
    Planted{"age", "senile"},               Planted{"age", "too old"},
    Planted{"age", "slow to learn"},        Planted{"social status", "lazy"},
    Planted{"social status", "lower class"}, Planted{"disability", "crippled"},
    Planted{"disability", "mentally weak"}, Planted{"religion", "fanatics"},
    Planted{"religion", "radical believers"}, Planted{"national", "illegal aliens"},
    Planted{"education", "uneducated"},     Planted{"education", "poorly educated"},
    Planted{"body size", "obese"},          Planted{"body size", "unfit to work"},
};

constexpr std::array kDecoys = {
    "too",     "emotional", "not",  "fit",    "model", "minority", "looking", "old",      "slow",
    "to",      "learn",     "lower", "class", "mentally", "weak", "radical", "believers", "illegal",
    "aliens",  "poorly",    "educated", "work", "unfit",
};

constexpr std::array kSyllables = {"ba", "ko", "mi", "tu", "re", "sa", "lo", "ne",
                                   "di", "fa", "gu", "pe", "vo", "zi", "ha", "ju"};

std::string filler_word(size_t i) {
  const size_t n = kSyllables.size();
  std::string w = std::string(kSyllables[i % n]) + kSyllables[(i / n) % n];
  for (size_t extra = i / (n * n); extra > 0; extra /= n) w += kSyllables[(extra + 6) % n];
  return w;
}

}  // namespace

Lexicon synthetic_lexicon() {
  Lexicon lex;
  for (const auto& p : kPlanted) lex.add(p.dimension, p.phrase);
  return lex;
}

SynthCorpus synthesize(const SynthConfig& config) {
  require(config.sentences >= 1, "synthesize needs at least one sentence");
  require(config.fillers >= 1, "synthesize needs filler words");
  require(config.min_words >= 1 && config.min_words <= config.max_words, "bad sentence length range");
  require(!config.datasets.empty(), "synthesize needs at least one dataset name");

  std::vector<std::string> fillers;
  for (size_t i = 0; i < config.fillers; ++i) fillers.push_back(filler_word(i));

  SynthCorpus out;
  out.lexicon = synthetic_lexicon();
  Rng rng(config.seed);

  for (size_t s = 0; s < config.sentences; ++s) {
    const size_t n_words =
        config.min_words + static_cast<size_t>(rng.below(config.max_words - config.min_words + 1));
    std::vector<std::string> words;
    for (size_t i = 0; i < n_words; ++i) words.push_back(fillers[rng.below(fillers.size())]);

    if (rng.uniform() < config.decoy_rate) {
      const size_t n_decoys = 1 + static_cast<size_t>(rng.below(2));
      for (size_t d = 0; d < n_decoys; ++d) {
        const size_t at = static_cast<size_t>(rng.below(words.size() + 1));
        words.insert(words.begin() + static_cast<long>(at), kDecoys[rng.below(kDecoys.size())]);
      }
    }
    if (rng.uniform() < config.biased_fraction) {
      const size_t n_phrases = 1 + static_cast<size_t>(rng.below(2));
      for (size_t p = 0; p < n_phrases; ++p) {
        const auto& planted = kPlanted[rng.below(kPlanted.size())];
        const size_t at = static_cast<size_t>(rng.below(words.size() + 1));
        words.insert(words.begin() + static_cast<long>(at), planted.phrase);
      }
    }

    std::string text;
    for (const auto& w : words) {
      if (!text.empty()) text += ' ';
      text += w;
    }
    text[0] = ascii_upper(text.substr(0, 1))[0];
    text += " .";

    // Gold comes from matching the final text, so accidental phrases formed
    // by adjacent decoys are labeled too.
    TaggedSentence gold = lexicon_annotate(text, out.lexicon);
    gold.provenance.assign(gold.size(), Provenance::kHuman);

    Record r;
    r.dataset = config.datasets[s % config.datasets.size()];
    r.text = text;
    for (const Span& sp : spans_of(gold)) {
      std::string phrase;
      for (size_t k = sp.begin; k < sp.end; ++k) {
        if (!phrase.empty()) phrase += ' ';
        phrase += gold.tokens[k].lower;
      }
      if (std::find(r.biased_words.begin(), r.biased_words.end(), phrase) == r.biased_words.end())
        r.biased_words.push_back(phrase);
    }
    r.label = r.biased_words.empty() ? Label::kNonBiased : Label::kBiased;
    if (!r.biased_words.empty()) {
      // Dimension of the first matched phrase.
      for (const auto& [dim, phrases] : out.lexicon.entries())
        for (const auto& p : phrases)
          if (ascii_lower(p) == r.biased_words.front()) r.aspect_of_bias = dim;
    }
    out.records.push_back(std::move(r));
    out.gold.push_back(std::move(gold));
  }
  return out;
}

}  // namespace biasner
