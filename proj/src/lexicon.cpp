#include "biasner/lexicon.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

#include "biasner/error.hpp"

namespace biasner {

void Lexicon::add(const std::string& dimension, const std::string& phrase) {
  if (dimension.empty()) fail(ErrorKind::kValidation, "lexicon dimension name is empty");
  if (tokenize(phrase).empty())
    fail(ErrorKind::kValidation, "lexicon phrase '" + phrase + "' has no tokens");
  auto& phrases = entries_[dimension];
  const std::string key = ascii_lower(phrase);
  for (const auto& p : phrases)
    if (ascii_lower(p) == key)
      fail(ErrorKind::kValidation, "duplicate phrase '" + phrase + "' in dimension '" + dimension + "'");
  phrases.push_back(phrase);
}

size_t Lexicon::phrase_count() const {
  size_t n = 0;
  for (const auto& [dim, phrases] : entries_) n += phrases.size();
  return n;
}

bool Lexicon::has_dimension(std::string_view dimension) const {
  return entries_.count(std::string(dimension)) > 0;
}

Lexicon Lexicon::from_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("lexicon JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::kParse, "lexicon JSON must map dimension -> [phrases]");
  Lexicon lex;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_array()) fail(ErrorKind::kParse, "lexicon dimension '" + it.key() + "' is not a list");
    for (const auto& p : it.value()) {
      if (!p.is_string()) fail(ErrorKind::kParse, "lexicon phrase in '" + it.key() + "' is not a string");
      lex.add(it.key(), p.get<std::string>());
    }
  }
  return lex;
}

std::string Lexicon::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [dim, phrases] : entries_) j[dim] = phrases;
  return j.dump(2) + "\n";
}

Lexicon Lexicon::starter() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kTable = {
      {"gender", {"hysterical", "emotional", "weak", "bossy", "fragile", "nagging", "man up", "tomboy"}},
      {"race", {"inner city", "illegal alien", "thug", "exotic", "uncivilized", "model minority", "white trash"}},
      {"social status", {"trailer park", "lazy", "freeloader", "welfare queen", "ghetto", "lazy bum", "filthy rich"}},
      {"age", {"senile", "slow", "old-fashioned", "whippersnapper", "elderly", "young and naive", "generation gap"}},
      {"disability", {"handicapped", "crippled", "invalid", "sufferer", "differently-abled", "victim"}},
      {"religion", {"radical", "terrorist", "infidel", "heathen", "fanatic", "holy roller"}},
      {"profession", {"greedy", "dishonest", "corrupt politician", "crooked lawyer", "greedy CEO", "lazy government worker"}},
      {"national", {"unpatriotic", "alien", "foreigner", "outsider", "immigrant", "nationalist"}},
      {"education", {"uneducated", "illiterate", "dropout", "underachiever", "overachiever", "smarty-pants"}},
      {"body size", {"fat", "slob", "skinny", "lardass", "beanpole", "plus-sized"}},
  };
  Lexicon lex;
  for (const auto& [dim, phrases] : kTable)
    for (const auto& p : phrases) lex.add(dim, p);
  return lex;
}

std::vector<Span> lexicon_matches(std::span<const Token> tokens, const Lexicon& lexicon) {
  // Phrases indexed by their first lowered token.
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> by_first;
  for (const auto& [dim, phrases] : lexicon.entries()) {
    for (const auto& p : phrases) {
      std::vector<std::string> words;
      for (const auto& t : tokenize(p)) words.push_back(t.lower);
      by_first[words.front()].push_back(std::move(words));
    }
  }

  std::vector<Span> candidates;
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto it = by_first.find(tokens[i].lower);
    if (it == by_first.end()) continue;
    for (const auto& words : it->second) {
      if (i + words.size() > tokens.size()) continue;
      bool ok = true;
      for (size_t k = 1; k < words.size() && ok; ++k) ok = tokens[i + k].lower == words[k];
      if (ok) candidates.push_back({i, i + words.size()});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Span& a, const Span& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.begin < b.begin;
  });

  std::vector<char> taken(tokens.size(), 0);
  std::vector<Span> accepted;
  for (const Span& c : candidates) {
    bool free = true;
    for (size_t k = c.begin; k < c.end && free; ++k) free = !taken[k];
    if (!free) continue;
    std::fill(taken.begin() + static_cast<long>(c.begin), taken.begin() + static_cast<long>(c.end), 1);
    accepted.push_back(c);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

TaggedSentence lexicon_annotate(std::string_view text, const Lexicon& lexicon) {
  require(!lexicon.empty(), "lexicon_annotate needs a non-empty lexicon");
  auto tokens = tokenize(text);
  const auto spans = lexicon_matches(tokens, lexicon);
  return bio_from_spans(std::string(text), std::move(tokens), spans, Provenance::kLexicon);
}

TaggedSentence annotate_record(const Record& record) {
  auto tokens = tokenize(record.text);
  std::vector<Span> spans;
  if (!record.biased_words.empty()) {
    Lexicon own;
    for (const auto& w : record.biased_words) {
      if (tokenize(w).empty()) continue;
      try {
        own.add("record", w);
      } catch (const Error&) {
        // repeated phrase
      }
    }
    if (!own.empty()) spans = lexicon_matches(tokens, own);
  }
  return bio_from_spans(record.text, std::move(tokens), spans, Provenance::kHuman);
}

}  // namespace biasner
