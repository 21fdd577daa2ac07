#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace biasner {

// A word or punctuation token. Offsets are byte offsets into the source text,
// end exclusive.
struct Token {
  std::string surface;
  size_t start = 0;
  size_t end = 0;
  std::string lower;

  bool operator==(const Token&) const = default;
};

struct CleanOpts {
  bool strip_punctuation = true;
  bool strip_digits = true;
  bool lowercase = true;
};

// Whitespace is always collapsed to single spaces and trimmed; the other
// rules follow the flags. Idempotent.
std::string clean(std::string_view text, const CleanOpts& opts = {});

// Splits on whitespace; every ASCII punctuation character becomes its own
// token. Bytes >= 0x80 are treated as word characters.
std::vector<Token> tokenize(std::string_view text);

std::string ascii_lower(std::string_view s);
std::string ascii_upper(std::string_view s);
bool is_punct(char c);

using TokenId = int32_t;

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;

  Vocab();

  // Adds `phrase` if absent and returns its id.
  TokenId add(std::string_view phrase);

  // Returns kUnk for unknown phrases.
  TokenId id_of(std::string_view phrase) const;
  bool contains(std::string_view phrase) const;
  const std::string& phrase(TokenId id) const;
  size_t size() const { return phrases_.size(); }
  const std::vector<std::string>& phrases() const { return phrases_; }

  // One phrase per line in id order; the first two lines hold the specials.
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);

  bool operator==(const Vocab& other) const { return phrases_ == other.phrases_; }

 private:
  std::vector<std::string> phrases_;
  std::unordered_map<std::string, TokenId> ids_;
};

// Ids are assigned by descending frequency, ties broken lexicographically.
Vocab build_vocab(std::span<const std::vector<Token>> sentences, size_t min_freq = 1);

// Lowercased lookup, truncated to max_len. No padding.
std::vector<TokenId> encode(std::span<const Token> tokens, const Vocab& vocab, size_t max_len);

}  // namespace biasner
