#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasner/corpus.hpp"
#include "biasner/model.hpp"

namespace biasner {

// ---------------------------------------------------------------------------
// Metrics

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero denominators give 0 for the affected quantity.
Prf prf_from_counts(size_t tp, size_t fp, size_t fn);

// Token-level. B-BIAS, I-BIAS and BIAS all count as `positive` when it is any
// bias tag, so bio and collapsed sequences compare directly.
Prf prf(std::span<const Tag> pred, std::span<const Tag> gold, Tag positive = Tag::kBias);

double accuracy(std::span<const Tag> pred, std::span<const Tag> gold);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the origin
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> curve;
};

// Mann-Whitney AUC, ties counted one half. Throws kContract when gold holds
// a single class (AUC undefined) or lengths differ.
RocResult roc_auc(std::span<const double> scores, std::span<const uint8_t> gold);

// "fpr,tpr,threshold" header plus one row per point.
std::string roc_csv(const RocResult& roc);

struct ConfusionCounts {
  std::string bias_type;
  size_t tp = 0;
  size_t fp = 0;
  size_t tn = 0;
  size_t fn = 0;

  double precision() const { return prf_from_counts(tp, fp, fn).precision; }
  size_t total() const { return tp + fp + tn + fn; }
};

// Percentage with one decimal, e.g. 0.918 -> "91.8".
std::string percent1(double fraction);

// Token counts bucketed by each sentence's bias type. Empty type names go to
// "unspecified"; buckets without tokens are omitted. Rows sorted by name.
std::vector<ConfusionCounts> confusion_table(std::span<const TaggedSentence> pred,
                                             std::span<const TaggedSentence> gold,
                                             std::span<const std::string> bias_types);

// Exact-match entity spans.
Prf span_prf(std::span<const TaggedSentence> pred, std::span<const TaggedSentence> gold);

// ---------------------------------------------------------------------------
// Corpus evaluation

struct EvalReport {
  size_t sentences = 0;
  size_t tokens = 0;
  Prf token;
  Prf span;
  double accuracy = 0.0;
  std::optional<double> auc;  // absent when gold has one class
  RocResult roc;
  std::vector<ConfusionCounts> confusion;

  std::string to_json() const;
  // Table-like plain text.
  std::string to_text() const;
};

struct Predicted {
  std::vector<TaggedSentence> sentences;  // collapsed, provenance model
  std::vector<std::vector<double>> p_bias;
};

Predicted predict_corpus(const ModelParams& params, const Vocab& vocab, std::span<const TaggedSentence> gold);

EvalReport evaluate(const Predicted& predicted, std::span<const TaggedSentence> gold,
                    std::span<const std::string> bias_types = {});

// ---------------------------------------------------------------------------
// Robustness

enum class PerturbKind : uint8_t { kSpelling, kSemantics, kCase, kContext };
enum class Verdict : uint8_t { kPass, kPartial, kFail };

std::string_view perturb_kind_name(PerturbKind kind);
std::optional<PerturbKind> parse_perturb_kind(std::string_view text);
std::string_view verdict_name(Verdict v);

struct RobustnessCase {
  std::string original;
  std::string perturbed;
  PerturbKind kind = PerturbKind::kSpelling;
  std::vector<Span> original_spans;  // token spans of `original`
  std::vector<Span> expected_spans;  // their counterparts in `perturbed`
  Verdict verdict = Verdict::kFail;
  size_t preserved = 0;
};

struct PerturbResources {
  // Each pair is usable in both directions; phrases may span several words.
  std::vector<std::pair<std::string, std::string>> synonyms;
  std::vector<std::string> intensity_adverbs;
  std::vector<std::string> stopwords;

  static const PerturbResources& bundled();
};

// Typo rules: letter doubling duplicates the character at index len/2
// ("superior" -> "superrior"); space insertion splits at index len/3
// ("unlike" -> "un like"). Edits target a content word inside one of `spans`
// when there is one. Returns nullopt when nothing can be perturbed for the
// kind (skip signal).
std::optional<RobustnessCase> perturb(std::string_view text, std::span<const Span> spans, PerturbKind kind,
                                      const PerturbResources& resources, uint64_t seed);

// A hand-written case with explicit span correspondence.
RobustnessCase make_case(std::string original, std::string perturbed, PerturbKind kind,
                         std::vector<Span> original_spans, std::vector<Span> expected_spans);

// Span preserved: every token of its counterpart in the perturbed text is
// tagged BIAS. All preserved -> pass, some -> partial, none -> fail.
Verdict verdict_for(std::span<const Tag> perturbed_tags, std::span<const Span> expected, size_t* preserved = nullptr);

struct KindCounts {
  size_t pass = 0;
  size_t partial = 0;
  size_t fail = 0;
};

struct RobustnessReport {
  std::vector<RobustnessCase> cases;
  std::vector<std::pair<PerturbKind, KindCounts>> per_kind;  // every kind, in enum order

  std::string to_json() const;
  std::string to_text() const;
};

RobustnessReport run_robustness(const ModelParams& params, const Vocab& vocab, std::vector<RobustnessCase> cases);

// Five hand-written perturbation cases with their bias spans.
std::vector<RobustnessCase> worked_robustness_suite();

// ---------------------------------------------------------------------------
// Perpetuation

struct PerpetuationResult {
  std::string phrase;
  std::string group;
  size_t trials = 0;
  size_t flagged = 0;

  double rate() const { return trials ? static_cast<double>(flagged) / static_cast<double>(trials) : 0.0; }
  // Whole percent, halves rounded up: 25/30 -> 83.
  long rate_percent() const;
};

// Rounded whole percentage of flagged/trials using integer arithmetic.
long percent_rounded(size_t flagged, size_t trials);

struct PhraseGroup {
  std::string phrase;
  std::string group;
};

// Neutral carrier sentences prepended to the filled template, one sampled per
// trial.
const std::vector<std::string>& neutral_carriers();

// The template must hold exactly one "[Phrase]" slot (kContract otherwise).
// A trial is flagged when any token of the inserted phrase is tagged BIAS.
std::vector<PerpetuationResult> perpetuation_test(const ModelParams& params, const Vocab& vocab,
                                                  std::string_view templ, std::span<const PhraseGroup> phrases,
                                                  size_t trials, uint64_t seed);

std::string perpetuation_json(std::span<const PerpetuationResult> results);
std::string perpetuation_text(std::span<const PerpetuationResult> results);

// ---------------------------------------------------------------------------
// Human evaluation

struct HumanEvalInput {
  std::string text;
  std::string identified_entity;
  std::vector<double> scores;
};

struct HumanEvalRow {
  std::string text;
  std::string identified_entity;
  std::vector<double> scores;
  double avg = 0.0;

  std::string avg_text() const;  // two decimals
};

// Throws kValidation for empty score lists or scores outside [1, 5].
std::vector<HumanEvalRow> human_eval_aggregate(std::span<const HumanEvalInput> rows);

// ---------------------------------------------------------------------------
// Ablation

enum class Variant : uint8_t { kFull, kNoAttn, kStaticEmb, kHalfDepth, kRandInit };

std::string_view variant_name(Variant v);
// Throws kConfig for unknown names.
Variant parse_variant(std::string_view name);

// The configuration a variant trains with: exactly one factor differs from
// `base`. HalfDepth keeps ceil(n_layers / 2) layers; StaticEmb freezes the
// embedding table; RandInit forces random init when `base` is warm.
ModelConfig variant_config(const ModelConfig& base, Variant v);

struct Stat {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation, 0 for one run
};

Stat mean_stdev(std::span<const double> xs);

struct AblationRow {
  Variant variant = Variant::kFull;
  Stat precision;
  Stat recall;
  Stat f1;
  std::vector<Prf> runs;
};

struct AblationInputs {
  std::span<const Example> train;
  std::span<const Example> dev;
  std::span<const Example> test;
  // Optional GloVe-format vectors for StaticEmb.
  std::string static_embeddings;
  const Vocab* vocab = nullptr;
};

// Token-level P/R/F1 of BIAS over examples.
Prf evaluate_examples(const ModelParams& params, std::span<const Example> examples);

std::vector<AblationRow> run_ablation(const ModelConfig& base, std::span<const Variant> variants,
                                      const AblationInputs& data, const Hyper& hyper,
                                      std::span<const uint64_t> seeds);

std::string ablation_json(std::span<const AblationRow> rows);
std::string ablation_text(std::span<const AblationRow> rows);

}  // namespace biasner
