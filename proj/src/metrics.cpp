#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/eval.hpp"

namespace biasner {

using nlohmann::json;

Prf prf_from_counts(size_t tp, size_t fp, size_t fn) {
  Prf r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

namespace {

bool matches(Tag t, Tag positive) { return positive == Tag::kO ? t == Tag::kO : is_bias(t); }

void check_lengths(size_t a, size_t b, const char* what) {
  if (a != b)
    fail(ErrorKind::kContract, std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                                   std::to_string(b) + ")");
}

}  // namespace

Prf prf(std::span<const Tag> pred, std::span<const Tag> gold, Tag positive) {
  check_lengths(pred.size(), gold.size(), "prf");
  require(!pred.empty(), "prf needs at least one token");
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = matches(pred[i], positive);
    const bool g = matches(gold[i], positive);
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  return prf_from_counts(tp, fp, fn);
}

double accuracy(std::span<const Tag> pred, std::span<const Tag> gold) {
  check_lengths(pred.size(), gold.size(), "accuracy");
  require(!pred.empty(), "accuracy needs at least one token");
  size_t same = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    // A collapsed BIAS matches either bio bias tag.
    const bool loose = pred[i] == Tag::kBias || gold[i] == Tag::kBias;
    same += pred[i] == gold[i] || (loose && is_bias(pred[i]) && is_bias(gold[i]));
  }
  return static_cast<double>(same) / static_cast<double>(pred.size());
}

RocResult roc_auc(std::span<const double> scores, std::span<const uint8_t> gold) {
  check_lengths(scores.size(), gold.size(), "roc_auc");
  const size_t n = scores.size();
  size_t n_pos = 0;
  for (uint8_t g : gold) n_pos += g != 0;
  const size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::kContract, "AUC is undefined when gold holds a single class");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  // Walk thresholds from high to low; a tie group moves the curve diagonally,
  // which is what counts ties as one half.
  size_t tp = 0, fp = 0;
  double area = 0.0;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    size_t dp = 0, dn = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (gold[order[j]] ? dp : dn)++;
      ++j;
    }
    area += static_cast<double>(dn) * (static_cast<double>(tp) + 0.5 * static_cast<double>(dp));
    tp += dp;
    fp += dn;
    r.curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                       static_cast<double>(tp) / static_cast<double>(n_pos), scores[order[i]]});
    i = j;
  }
  r.auc = area / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return r;
}

std::string roc_csv(const RocResult& roc) {
  std::ostringstream out;
  out << "fpr,tpr,threshold\n";
  out.precision(10);
  for (const auto& p : roc.curve) {
    out << p.fpr << ',' << p.tpr << ',';
    if (std::isinf(p.threshold)) out << "inf";
    else out << p.threshold;
    out << '\n';
  }
  return out.str();
}

std::string percent1(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
  return buf;
}

std::vector<ConfusionCounts> confusion_table(std::span<const TaggedSentence> pred,
                                             std::span<const TaggedSentence> gold,
                                             std::span<const std::string> bias_types) {
  check_lengths(pred.size(), gold.size(), "confusion_table");
  require(bias_types.empty() || bias_types.size() == gold.size(), "confusion_table: one bias type per sentence");
  std::map<std::string, ConfusionCounts> buckets;
  for (size_t i = 0; i < gold.size(); ++i) {
    check_lengths(pred[i].size(), gold[i].size(), "confusion_table sentence");
    std::string type = bias_types.empty() ? std::string() : bias_types[i];
    if (type.empty()) type = std::string(kUnspecifiedAspect);
    auto& c = buckets[type];
    c.bias_type = type;
    for (size_t k = 0; k < gold[i].size(); ++k) {
      const bool p = is_bias(pred[i].tags[k]);
      const bool g = is_bias(gold[i].tags[k]);
      if (p && g) ++c.tp;
      else if (p) ++c.fp;
      else if (g) ++c.fn;
      else ++c.tn;
    }
  }
  std::vector<ConfusionCounts> out;
  for (auto& [name, c] : buckets)
    if (c.total() > 0) out.push_back(std::move(c));
  return out;
}

Prf span_prf(std::span<const TaggedSentence> pred, std::span<const TaggedSentence> gold) {
  check_lengths(pred.size(), gold.size(), "span_prf");
  size_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    const auto p = spans_of(pred[i]);
    const auto g = spans_of(gold[i]);
    size_t hit = 0;
    for (const Span& s : p) hit += std::find(g.begin(), g.end(), s) != g.end();
    tp += hit;
    fp += p.size() - hit;
    fn += g.size() - hit;
  }
  return prf_from_counts(tp, fp, fn);
}

Predicted predict_corpus(const ModelParams& params, const Vocab& vocab, std::span<const TaggedSentence> gold) {
  Predicted out;
  for (const auto& g : gold) {
    const auto preds = predict_tokens(g.tokens, params, vocab);
    TaggedSentence s;
    s.text = g.text;
    s.tokens = g.tokens;
    s.scheme = Scheme::kCollapsed;
    std::vector<double> p;
    for (const auto& tp : preds) {
      s.tags.push_back(tp.tag);
      p.push_back(tp.p_bias);
    }
    s.provenance.assign(s.tokens.size(), Provenance::kModel);
    out.sentences.push_back(std::move(s));
    out.p_bias.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate(const Predicted& predicted, std::span<const TaggedSentence> gold,
                    std::span<const std::string> bias_types) {
  check_lengths(predicted.sentences.size(), gold.size(), "evaluate");
  EvalReport r;
  r.sentences = gold.size();
  std::vector<Tag> pred_tags, gold_tags;
  std::vector<double> scores;
  std::vector<uint8_t> labels;
  for (size_t i = 0; i < gold.size(); ++i) {
    check_lengths(predicted.sentences[i].size(), gold[i].size(), "evaluate sentence");
    for (size_t k = 0; k < gold[i].size(); ++k) {
      pred_tags.push_back(predicted.sentences[i].tags[k]);
      gold_tags.push_back(gold[i].tags[k]);
      scores.push_back(predicted.p_bias.size() > i ? predicted.p_bias[i][k] : 0.0);
      labels.push_back(is_bias(gold[i].tags[k]) ? 1 : 0);
    }
  }
  r.tokens = gold_tags.size();
  if (r.tokens == 0) return r;
  r.token = prf(pred_tags, gold_tags);
  r.accuracy = accuracy(pred_tags, gold_tags);
  r.span = span_prf(predicted.sentences, gold);
  const size_t pos = static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos > 0 && pos < labels.size()) {
    r.roc = roc_auc(scores, labels);
    r.auc = r.roc.auc;
  }
  r.confusion = confusion_table(predicted.sentences, gold, bias_types);
  return r;
}

namespace {

json prf_json(const Prf& p) { return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["sentences"] = sentences;
  j["tokens"] = tokens;
  j["token"] = prf_json(token);
  j["span"] = prf_json(span);
  j["accuracy"] = accuracy;
  j["auc"] = auc ? json(*auc) : json(nullptr);
  json rows = json::array();
  for (const auto& c : confusion)
    rows.push_back({{"bias_type", c.bias_type},
                    {"tp", c.tp},
                    {"fp", c.fp},
                    {"tn", c.tn},
                    {"fn", c.fn},
                    {"precision_percent", percent1(c.precision())}});
  j["confusion"] = rows;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "sentences %zu  tokens %zu\n", sentences, tokens);
  out << buf;
  std::snprintf(buf, sizeof(buf), "token   P %.4f  R %.4f  F1 %.4f\n", token.precision, token.recall, token.f1);
  out << buf;
  std::snprintf(buf, sizeof(buf), "span    P %.4f  R %.4f  F1 %.4f\n", span.precision, span.recall, span.f1);
  out << buf;
  std::snprintf(buf, sizeof(buf), "accuracy %.4f\n", accuracy);
  out << buf;
  if (auc) {
    std::snprintf(buf, sizeof(buf), "auc %.4f\n", *auc);
    out << buf;
  } else {
    out << "auc undefined (single class)\n";
  }
  if (!confusion.empty()) {
    out << "\nbias type                     TP     FP     TN     FN  precision\n";
    for (const auto& c : confusion) {
      std::snprintf(buf, sizeof(buf), "%-26s %6zu %6zu %6zu %6zu  %s%%\n", c.bias_type.c_str(), c.tp, c.fp, c.tn,
                    c.fn, percent1(c.precision()).c_str());
      out << buf;
    }
  }
  return out.str();
}

}  // namespace biasner
