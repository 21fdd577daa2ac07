#include "biasner/text.hpp"

#include <algorithm>
#include <map>

#include "biasner/error.hpp"

namespace biasner {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config_error";
    case ErrorKind::kIngest: return "ingest_error";
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kContract: return "contract_error";
    case ErrorKind::kValidation: return "validation_error";
    case ErrorKind::kLoad: return "load_error";
    case ErrorKind::kNumeric: return "numeric_error";
    case ErrorKind::kSplit: return "split_error";
    case ErrorKind::kState: return "state_error";
    case ErrorKind::kIo: return "io_error";
  }
  return "error";
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::string ascii_upper(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  return out;
}

std::string clean(std::string_view text, const CleanOpts& opts) {
  // Removed characters become spaces so that "a,b" does not fuse into "ab".
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (opts.strip_punctuation && is_punct(c)) c = ' ';
    if (opts.strip_digits && is_digit(c)) c = ' ';
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (opts.lowercase && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  auto emit = [&](size_t start, size_t end) {
    Token t;
    t.surface = std::string(text.substr(start, end - start));
    t.start = start;
    t.end = end;
    t.lower = ascii_lower(t.surface);
    tokens.push_back(std::move(t));
  };

  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_punct(c)) {
      emit(i, i + 1);
      ++i;
    } else {
      size_t j = i;
      while (j < text.size() && !is_space(text[j]) && !is_punct(text[j])) ++j;
      emit(i, j);
      i = j;
    }
  }
  return tokens;
}

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
}

TokenId Vocab::add(std::string_view phrase) {
  std::string key(phrase);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(phrases_.size());
  phrases_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

TokenId Vocab::id_of(std::string_view phrase) const {
  auto it = ids_.find(std::string(phrase));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view phrase) const {
  return ids_.count(std::string(phrase)) > 0;
}

const std::string& Vocab::phrase(TokenId id) const {
  require(id >= 0 && static_cast<size_t>(id) < phrases_.size(), "vocab id out of range");
  return phrases_[static_cast<size_t>(id)];
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& p : phrases_) {
    out += p;
    out += '\n';
  }
  return out;
}

Vocab Vocab::deserialize(std::string_view text) {
  Vocab v;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (line_no >= 2) {
      if (v.contains(line)) fail(ErrorKind::kParse, "duplicate vocab entry on line " + std::to_string(line_no + 1));
      v.add(line);
    }
    ++line_no;
    pos = nl + 1;
  }
  if (line_no < 2) fail(ErrorKind::kParse, "vocab file lacks special entries");
  return v;
}

Vocab build_vocab(std::span<const std::vector<Token>> sentences, size_t min_freq) {
  require(min_freq >= 1, "min_freq must be >= 1");
  std::map<std::string, size_t> freq;
  for (const auto& sentence : sentences)
    for (const auto& tok : sentence) ++freq[tok.lower];

  std::vector<std::pair<std::string, size_t>> kept;
  for (auto& [word, count] : freq)
    if (count >= min_freq) kept.emplace_back(word, count);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab vocab;
  for (const auto& [word, count] : kept) vocab.add(word);
  return vocab;
}

std::vector<TokenId> encode(std::span<const Token> tokens, const Vocab& vocab, size_t max_len) {
  require(max_len >= 1, "max_len must be >= 1");
  const size_t n = std::min(tokens.size(), max_len);
  std::vector<TokenId> ids;
  ids.reserve(n);
  for (size_t i = 0; i < n; ++i) ids.push_back(vocab.id_of(tokens[i].lower));
  return ids;
}

}  // namespace biasner
