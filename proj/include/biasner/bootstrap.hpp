#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "biasner/agreement.hpp"
#include "biasner/corpus.hpp"
#include "biasner/lexicon.hpp"
#include "biasner/model.hpp"

namespace biasner {

enum class Pool : uint8_t { kRaw, kProposed, kGold };
enum class ItemStatus : uint8_t { kPending, kResolved };
enum class Action : uint8_t { kAccept, kReject, kEdit };

std::string_view pool_name(Pool p);
std::string_view action_name(Action a);
std::optional<Action> parse_action(std::string_view text);

// Decision for one proposed span. kEdit replaces it with `spans`.
struct SpanDecision {
  Action action = Action::kAccept;
  std::vector<Span> spans;

  bool operator==(const SpanDecision&) const = default;
};

struct Resolution {
  std::string reviewer;
  uint64_t version = 0;  // the item version the reviewer saw
  std::vector<SpanDecision> decisions;  // one per proposed span, in order
  std::vector<Span> added;             // spans the proposal missed
  std::string note;

  bool operator==(const Resolution&) const = default;
};

struct ReviewItem {
  uint64_t id = 0;
  size_t sentence = 0;
  size_t increment = 0;        // 1-based
  TaggedSentence proposed;     // bio
  std::vector<double> p_bias;  // per token
  std::vector<Span> spans;     // proposed spans
  ItemStatus status = ItemStatus::kPending;
  uint64_t version = 0;
  // Latest final span set per reviewer (consensus mode).
  std::vector<std::pair<std::string, std::vector<Span>>> votes;
  std::string note;

  bool operator==(const ReviewItem&) const = default;
};

// Append-only log. Queue events carry the proposal so the log alone
// reconstructs every review item; resolve events carry the decisions.
struct AuditEntry {
  enum class Type : uint8_t { kQueue, kResolve, kTrain };

  uint64_t seq = 0;
  Type type = Type::kQueue;
  std::string timestamp;
  uint64_t item = 0;
  size_t sentence = 0;
  size_t increment = 0;
  // kQueue
  std::vector<Tag> proposed_tags;
  std::vector<double> p_bias;
  Provenance provenance = Provenance::kLexicon;
  // kResolve
  Resolution resolution;
  std::vector<Span> final_spans;
  bool resolved = false;
  // kTrain: sentences the model was trained on, and the model checksum
  std::vector<size_t> training_set;
  uint64_t model_checksum = 0;

  bool operator==(const AuditEntry&) const = default;
};

struct IncrementStats {
  size_t increment = 0;
  size_t items = 0;
  Provenance source = Provenance::kLexicon;
  // Token agreement between the proposal and the final gold tags; set once
  // every item of the increment is resolved.
  std::optional<AgreementReport> agreement;

  bool operator==(const IncrementStats&) const = default;
};

struct LoopConfig {
  double increment_size = 0.2;
  uint64_t seed = 17;
  // Two or more reviewers switch on consensus mode.
  std::vector<std::string> reviewers;
  bool fine_tune = false;  // default retrains from scratch each increment

  bool operator==(const LoopConfig&) const = default;
};

using Clock = std::function<std::string()>;

// ISO-8601 UTC wall clock.
std::string utc_now();

struct LoopState {
  LoopConfig config;
  std::vector<Record> records;
  std::vector<TaggedSentence> sentences;  // tokenized, all O
  std::vector<size_t> order;              // seeded, dataset-stratified
  size_t cursor = 0;                      // next position in `order`
  std::vector<Pool> pool;
  std::vector<std::optional<TaggedSentence>> gold;  // bio, provenance human
  std::vector<ReviewItem> items;
  std::vector<AuditEntry> audit;
  std::vector<IncrementStats> increments;
  size_t increments_done = 0;
  uint64_t model_checksum = 0;

  size_t size() const { return sentences.size(); }
  size_t count(Pool p) const;
  size_t pending() const;
  // Throws kState when pools are not a partition or gold lacks a sentence.
  void check_invariants() const;

  bool operator==(const LoopState&) const = default;
};

// Tokenizes the records and fixes the sampling order. Throws kContract for
// an empty corpus.
LoopState make_loop(std::vector<Record> records, const LoopConfig& config);

// Cumulative target after k increments: min(N, ceil(k * size * N)).
size_t cumulative_target(size_t n, double increment_size, size_t k);

// Queues the first increment pre-annotated by the lexicon. Requires
// increments_done == 0.
void seed_increment(LoopState& state, const Lexicon& lexicon, const Clock& clock = utc_now);

// Queues the next increment labeled by the model. Returns false when raw is
// exhausted (loop complete). Throws kState while items are still pending.
bool propose_increment(LoopState& state, const ModelParams& params, const Vocab& vocab,
                       const Clock& clock = utc_now);

struct ResolveOutcome {
  bool resolved = false;
  uint64_t version = 0;  // item version after this call
};

// kState: unknown item, already resolved (idempotency), stale version.
// kContract: decision count differs from the proposed span count, spans out
// of range, reviewer not registered in consensus mode.
ResolveOutcome resolve(LoopState& state, uint64_t item_id, const Resolution& resolution,
                       const Clock& clock = utc_now);

// Gold sentences in corpus order (only human-confirmed labels).
std::vector<size_t> gold_ids(const LoopState& state);

// Records that a model was trained on `ids`; throws kState if any of them is
// not gold.
void log_training(LoopState& state, const std::vector<size_t>& ids, uint64_t model_checksum,
                  const Clock& clock = utc_now);

// Rebuilds a state from the corpus, config and an audit log.
LoopState replay(std::vector<Record> records, const LoopConfig& config, const std::vector<AuditEntry>& audit);

// ---------------------------------------------------------------------------
// Resolvers for headless runs

using Resolver = std::function<Resolution(const LoopState&, const ReviewItem&, const std::string& reviewer)>;

// Accepts a span when every token's p_bias >= tau, rejects it otherwise.
// Lexicon proposals carry p_bias 1 on matched tokens.
Resolver auto_accept_resolver(double tau = 0.9);

// Simulated expert: accepts proposed spans found in `reference`, rejects the
// rest, adds missed reference spans. `reference` is indexed by sentence.
Resolver reference_resolver(std::vector<TaggedSentence> reference);

struct LoopRunConfig {
  ModelConfig model;  // vocab_size is filled in from the corpus
  Hyper hyper;
  uint64_t init_seed = 5;
  size_t max_increments = SIZE_MAX;
};

struct LoopRunResult {
  ModelParams model;
  Vocab vocab;
  std::vector<IncrementStats> increments;
};

// seed -> resolve -> (train on gold -> propose -> resolve)* -> final train.
// Throws kState with the pending count when the resolver leaves items open.
LoopRunResult run_loop(LoopState& state, const Lexicon& lexicon, const Resolver& resolver,
                       const LoopRunConfig& run, const Clock& clock = utc_now);

// Every increment's agreement, in order.
std::vector<AgreementReport> kappa_series(const LoopState& state);

// Serialization used by the workspace.
std::string loop_state_to_json(const LoopState& state);
LoopState loop_state_from_json(std::string_view text);
std::string audit_entry_to_json(const AuditEntry& e);
AuditEntry audit_entry_from_json(std::string_view line);

}  // namespace biasner
