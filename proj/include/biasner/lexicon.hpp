#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biasner/corpus.hpp"

namespace biasner {

// Bias-indicative phrases grouped by bias dimension.
class Lexicon {
 public:
  // Throws kValidation when the phrase tokenizes to nothing or already
  // exists in the dimension.
  void add(const std::string& dimension, const std::string& phrase);

  bool empty() const { return entries_.empty(); }
  size_t phrase_count() const;
  const std::map<std::string, std::vector<std::string>>& entries() const { return entries_; }
  bool has_dimension(std::string_view dimension) const;

  // {"dimension": ["phrase", ...], ...}
  static Lexicon from_json(std::string_view json_text);
  std::string to_json() const;

  // Starter phrases per bias dimension used to seed annotation.
  static Lexicon starter();

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// Case-insensitive, token-boundary phrase matching. Candidate matches are
// accepted longest first, then leftmost, skipping any that overlap an already
// accepted match. Matched tokens are tagged B-BIAS/I-BIAS, provenance lexicon.
TaggedSentence lexicon_annotate(std::string_view text, const Lexicon& lexicon);

// Gold tags for a record: its own biased_words located in its text with the
// same matching rules. Provenance human.
TaggedSentence annotate_record(const Record& record);

// Same matching over pre-tokenized input.
std::vector<Span> lexicon_matches(std::span<const Token> tokens, const Lexicon& lexicon);

}  // namespace biasner
