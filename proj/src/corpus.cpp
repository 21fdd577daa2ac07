#include "biasner/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "biasner/error.hpp"
#include "biasner/rng.hpp"

namespace biasner {

std::string_view label_name(Label label) {
  return label == Label::kBiased ? "biased" : "non-biased";
}

std::optional<Label> parse_label(std::string_view text) {
  const std::string l = ascii_lower(text);
  if (l == "biased" || l == "1" || l == "true" || l == "yes") return Label::kBiased;
  if (l == "non-biased" || l == "nonbiased" || l == "non biased" || l == "unbiased" ||
      l == "0" || l == "false" || l == "no")
    return Label::kNonBiased;
  return std::nullopt;
}

std::string_view tag_name(Tag tag) {
  switch (tag) {
    case Tag::kO: return "O";
    case Tag::kBeginBias: return "B-BIAS";
    case Tag::kInsideBias: return "I-BIAS";
    case Tag::kBias: return "BIAS";
  }
  return "O";
}

std::optional<Tag> parse_tag(std::string_view text) {
  if (text == "O") return Tag::kO;
  if (text == "B-BIAS") return Tag::kBeginBias;
  if (text == "I-BIAS") return Tag::kInsideBias;
  if (text == "BIAS") return Tag::kBias;
  return std::nullopt;
}

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kLexicon: return "lexicon";
    case Provenance::kModel: return "model";
    case Provenance::kHuman: return "human";
  }
  return "human";
}

std::optional<Provenance> parse_provenance(std::string_view text) {
  if (text == "lexicon") return Provenance::kLexicon;
  if (text == "model") return Provenance::kModel;
  if (text == "human") return Provenance::kHuman;
  return std::nullopt;
}

void validate(const TaggedSentence& s) {
  if (s.tags.size() != s.tokens.size())
    fail(ErrorKind::kValidation, "tag count " + std::to_string(s.tags.size()) +
                                     " != token count " + std::to_string(s.tokens.size()));
  if (!s.provenance.empty() && s.provenance.size() != s.tokens.size())
    fail(ErrorKind::kValidation, "provenance count does not match token count");
  for (size_t i = 0; i < s.tags.size(); ++i) {
    const Tag t = s.tags[i];
    if (s.scheme == Scheme::kBio) {
      if (t == Tag::kBias)
        fail(ErrorKind::kValidation, "collapsed tag BIAS in bio sentence at index " + std::to_string(i));
      if (t == Tag::kInsideBias && (i == 0 || s.tags[i - 1] == Tag::kO))
        fail(ErrorKind::kValidation, "I-BIAS without preceding entity at index " + std::to_string(i));
    } else if (t != Tag::kBias && t != Tag::kO) {
      fail(ErrorKind::kValidation, "bio tag in collapsed sentence at index " + std::to_string(i));
    }
  }
}

TaggedSentence bio_from_spans(std::string text, std::vector<Token> tokens,
                              std::span<const Span> spans, Provenance provenance) {
  std::vector<Span> sorted(spans.begin(), spans.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<Span> merged;
  for (const Span& sp : sorted) {
    if (sp.begin >= sp.end || sp.end > tokens.size())
      fail(ErrorKind::kValidation, "span [" + std::to_string(sp.begin) + "," + std::to_string(sp.end) +
                                       ") outside sentence of " + std::to_string(tokens.size()) + " tokens");
    if (!merged.empty() && sp.begin < merged.back().end)
      merged.back().end = std::max(merged.back().end, sp.end);
    else
      merged.push_back(sp);
  }

  TaggedSentence s;
  s.text = std::move(text);
  s.tokens = std::move(tokens);
  s.scheme = Scheme::kBio;
  s.tags.assign(s.tokens.size(), Tag::kO);
  s.provenance.assign(s.tokens.size(), provenance);
  for (const Span& sp : merged) {
    s.tags[sp.begin] = Tag::kBeginBias;
    for (size_t i = sp.begin + 1; i < sp.end; ++i) s.tags[i] = Tag::kInsideBias;
  }
  return s;
}

std::vector<Span> spans_of(const TaggedSentence& s) {
  std::vector<Span> out;
  for (size_t i = 0; i < s.tags.size();) {
    if (!is_bias(s.tags[i])) {
      ++i;
      continue;
    }
    size_t j = i + 1;
    if (s.scheme == Scheme::kBio) {
      while (j < s.tags.size() && s.tags[j] == Tag::kInsideBias) ++j;
    } else {
      while (j < s.tags.size() && s.tags[j] == Tag::kBias) ++j;
    }
    out.push_back({i, j});
    i = j;
  }
  return out;
}

TaggedSentence collapse_tags(const TaggedSentence& bio) {
  if (bio.scheme != Scheme::kBio) fail(ErrorKind::kValidation, "collapse_tags expects a bio sentence");
  validate(bio);
  TaggedSentence out = bio;
  out.scheme = Scheme::kCollapsed;
  for (Tag& t : out.tags) t = is_bias(t) ? Tag::kBias : Tag::kO;
  return out;
}

TaggedSentence expand_tags(const TaggedSentence& collapsed) {
  if (collapsed.scheme != Scheme::kCollapsed)
    fail(ErrorKind::kValidation, "expand_tags expects a collapsed sentence");
  validate(collapsed);
  TaggedSentence out = collapsed;
  out.scheme = Scheme::kBio;
  for (size_t i = 0; i < out.tags.size(); ++i) {
    if (collapsed.tags[i] == Tag::kO) continue;
    const bool continues = i > 0 && collapsed.tags[i - 1] == Tag::kBias;
    out.tags[i] = continues ? Tag::kInsideBias : Tag::kBeginBias;
  }
  return out;
}

namespace {

// Largest-remainder apportionment of `total` items over strata, capped by
// each stratum's available count.
std::vector<size_t> apportion(size_t total, const std::vector<size_t>& weights,
                              const std::vector<size_t>& available) {
  const size_t weight_sum = std::accumulate(weights.begin(), weights.end(), size_t{0});
  std::vector<size_t> quota(weights.size(), 0);
  if (weight_sum == 0 || total == 0) return quota;

  std::vector<std::pair<double, size_t>> remainders;
  size_t assigned = 0;
  for (size_t k = 0; k < weights.size(); ++k) {
    const double exact = static_cast<double>(total) * static_cast<double>(weights[k]) /
                         static_cast<double>(weight_sum);
    quota[k] = std::min(static_cast<size_t>(std::floor(exact)), available[k]);
    assigned += quota[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // Hand out the leftover one at a time; a second sweep covers strata that
  // were capped.
  for (int sweep = 0; sweep < 2 && assigned < total; ++sweep) {
    for (const auto& [rem, k] : remainders) {
      if (assigned == total) break;
      if (quota[k] < available[k]) {
        ++quota[k];
        ++assigned;
      }
    }
  }
  while (assigned < total) {
    bool progressed = false;
    for (size_t k = 0; k < quota.size() && assigned < total; ++k) {
      if (quota[k] < available[k]) {
        ++quota[k];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return quota;
}

}  // namespace

CorpusSplit split_corpus(std::span<const Record> records, const SplitRatios& ratios, uint64_t seed) {
  const double r[3] = {ratios.train, ratios.dev, ratios.test};
  for (double x : r)
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorKind::kContract, "split ratios must be non-negative");
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) fail(ErrorKind::kContract, "split ratios must sum to 1");
  if (r[0] <= 0.0) fail(ErrorKind::kContract, "train ratio must be positive");

  const size_t n = records.size();
  const size_t needed = static_cast<size_t>(r[0] > 0) + (r[1] > 0) + (r[2] > 0);
  if (n < needed)
    fail(ErrorKind::kSplit, std::to_string(n) + " records cannot fill " + std::to_string(needed) + " partitions");

  auto floor_size = [&](double ratio) -> size_t {
    if (ratio <= 0.0) return 0;
    const auto sz = static_cast<size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    return std::max<size_t>(sz, 1);
  };
  size_t n_dev = floor_size(r[1]);
  size_t n_test = floor_size(r[2]);
  while (n_dev + n_test >= n) {
    // Only reachable for tiny corpora with extreme ratios: keep train >= 1.
    if (n_dev >= n_test && n_dev > 1) --n_dev;
    else if (n_test > 1) --n_test;
    else fail(ErrorKind::kSplit, "corpus too small for requested ratios");
  }

  // Strata by label, each in a seeded order.
  std::map<Label, std::vector<size_t>> strata;
  for (size_t i = 0; i < n; ++i) strata[records[i].label].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<size_t>*> order;
  std::vector<size_t> sizes;
  for (auto& [label, idx] : strata) {
    rng.shuffle(std::span<size_t>(idx));
    order.push_back(&idx);
    sizes.push_back(idx.size());
  }

  const std::vector<size_t> test_quota = apportion(n_test, sizes, sizes);
  std::vector<size_t> left(sizes.size());
  for (size_t k = 0; k < sizes.size(); ++k) left[k] = sizes[k] - test_quota[k];
  const std::vector<size_t> dev_quota = apportion(n_dev, sizes, left);

  CorpusSplit out;
  for (size_t k = 0; k < order.size(); ++k) {
    const auto& idx = *order[k];
    size_t pos = 0;
    for (size_t j = 0; j < test_quota[k]; ++j) out.test.push_back(records[idx[pos++]]);
    for (size_t j = 0; j < dev_quota[k]; ++j) out.dev.push_back(records[idx[pos++]]);
    while (pos < idx.size()) out.train.push_back(records[idx[pos++]]);
  }
  return out;
}

}  // namespace biasner
