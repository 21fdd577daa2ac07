#include "biasner/bootstrap.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <map>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/rng.hpp"

namespace biasner {

using nlohmann::json;

std::string_view pool_name(Pool p) {
  switch (p) {
    case Pool::kRaw: return "raw";
    case Pool::kProposed: return "proposed";
    case Pool::kGold: return "gold";
  }
  return "raw";
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::kAccept: return "accept";
    case Action::kReject: return "reject";
    case Action::kEdit: return "edit";
  }
  return "accept";
}

std::optional<Action> parse_action(std::string_view text) {
  for (Action a : {Action::kAccept, Action::kReject, Action::kEdit})
    if (text == action_name(a)) return a;
  return std::nullopt;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

size_t LoopState::count(Pool p) const { return static_cast<size_t>(std::count(pool.begin(), pool.end(), p)); }

size_t LoopState::pending() const {
  return static_cast<size_t>(std::count_if(items.begin(), items.end(),
                                           [](const ReviewItem& it) { return it.status == ItemStatus::kPending; }));
}

void LoopState::check_invariants() const {
  if (pool.size() != sentences.size() || gold.size() != sentences.size())
    fail(ErrorKind::kState, "pool table does not cover the corpus");
  for (size_t i = 0; i < pool.size(); ++i) {
    if ((pool[i] == Pool::kGold) != gold[i].has_value())
      fail(ErrorKind::kState, "sentence " + std::to_string(i) + " gold label disagrees with its pool");
  }
  std::vector<int> open(sentences.size(), 0);
  for (const auto& it : items)
    if (it.status == ItemStatus::kPending) ++open[it.sentence];
  for (size_t i = 0; i < pool.size(); ++i) {
    const bool proposed = pool[i] == Pool::kProposed;
    if (proposed != (open[i] == 1))
      fail(ErrorKind::kState, "sentence " + std::to_string(i) + " is " + std::string(pool_name(pool[i])) +
                                  " with " + std::to_string(open[i]) + " open review items");
  }
}

size_t cumulative_target(size_t n, double increment_size, size_t k) {
  const double want = std::ceil(static_cast<double>(k) * increment_size * static_cast<double>(n) - 1e-9);
  if (want >= static_cast<double>(n)) return n;
  return static_cast<size_t>(std::max(0.0, want));
}

LoopState make_loop(std::vector<Record> records, const LoopConfig& config) {
  require(!records.empty(), "bootstrap needs a non-empty corpus");
  require(config.increment_size > 0.0 && config.increment_size <= 1.0, "increment size must be in (0, 1]");
  LoopState s;
  s.config = config;
  s.records = std::move(records);
  const size_t n = s.records.size();
  for (const auto& r : s.records) s.sentences.push_back(bio_from_spans(r.text, tokenize(r.text), {}, Provenance::kHuman));
  s.pool.assign(n, Pool::kRaw);
  s.gold.assign(n, std::nullopt);

  // Shuffle within each source dataset, then interleave so every prefix
  // keeps the datasets' proportions as closely as possible.
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < n; ++i) groups[s.records[i].dataset].push_back(i);
  Rng rng(config.seed);
  std::vector<std::vector<size_t>*> gs;
  for (auto& [name, idx] : groups) {
    rng.shuffle(std::span<size_t>(idx));
    gs.push_back(&idx);
  }
  std::vector<size_t> taken(gs.size(), 0);
  for (size_t k = 1; k <= n; ++k) {
    size_t best = SIZE_MAX;
    long long best_deficit = 0;
    for (size_t g = 0; g < gs.size(); ++g) {
      if (taken[g] == gs[g]->size()) continue;
      const long long deficit = static_cast<long long>(k * gs[g]->size()) - static_cast<long long>(taken[g] * n);
      if (best == SIZE_MAX || deficit > best_deficit) {
        best = g;
        best_deficit = deficit;
      }
    }
    s.order.push_back((*gs[best])[taken[best]++]);
  }
  return s;
}

namespace {

std::vector<Tag> bio_tags(const std::vector<Tag>& tags) {
  std::vector<Tag> out = tags;
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] == Tag::kBias) out[i] = (i > 0 && is_bias(tags[i - 1])) ? Tag::kInsideBias : Tag::kBeginBias;
  }
  return out;
}

void begin_increment(LoopState& s, Provenance source) {
  ++s.increments_done;
  s.increments.push_back({s.increments_done, 0, source, std::nullopt});
}

void queue_item(LoopState& s, std::vector<Tag> proposed_tags, std::vector<double> p_bias, Provenance provenance,
                const std::string& timestamp) {
  if (s.cursor >= s.order.size()) fail(ErrorKind::kState, "no raw sentences left to queue");
  const size_t sentence = s.order[s.cursor];
  if (s.pool[sentence] != Pool::kRaw) fail(ErrorKind::kState, "sentence " + std::to_string(sentence) + " is not raw");
  const auto& base = s.sentences[sentence];
  if (proposed_tags.size() != base.size() || p_bias.size() != base.size())
    fail(ErrorKind::kState, "proposal length differs from sentence " + std::to_string(sentence));

  ReviewItem it;
  it.id = s.items.size() + 1;
  it.sentence = sentence;
  it.increment = s.increments_done;
  it.proposed = base;
  it.proposed.tags = std::move(proposed_tags);
  it.proposed.scheme = Scheme::kBio;
  it.proposed.provenance.assign(base.size(), provenance);
  validate(it.proposed);
  it.p_bias = std::move(p_bias);
  it.spans = spans_of(it.proposed);

  AuditEntry e;
  e.seq = s.audit.size() + 1;
  e.type = AuditEntry::Type::kQueue;
  e.timestamp = timestamp;
  e.item = it.id;
  e.sentence = sentence;
  e.increment = it.increment;
  e.proposed_tags = it.proposed.tags;
  e.p_bias = it.p_bias;
  e.provenance = provenance;

  s.pool[sentence] = Pool::kProposed;
  ++s.cursor;
  ++s.increments.back().items;
  s.items.push_back(std::move(it));
  s.audit.push_back(std::move(e));
}

void check_span(const Span& sp, size_t n, const char* what) {
  if (!(sp.begin < sp.end && sp.end <= n))
    fail(ErrorKind::kContract, std::string(what) + " span [" + std::to_string(sp.begin) + ", " +
                                   std::to_string(sp.end) + ") outside the sentence of " + std::to_string(n) +
                                   " tokens");
}

void update_agreement(LoopState& s, size_t increment) {
  std::vector<std::string> a, b;
  for (const auto& it : s.items) {
    if (it.increment != increment) continue;
    if (it.status != ItemStatus::kResolved) return;
    const auto& g = *s.gold[it.sentence];
    for (size_t k = 0; k < g.size(); ++k) {
      a.emplace_back(is_bias(it.proposed.tags[k]) ? "BIAS" : "O");
      b.emplace_back(is_bias(g.tags[k]) ? "BIAS" : "O");
    }
  }
  auto& stats = s.increments.at(increment - 1);
  if (a.empty()) {
    // Increments of token-less sentences agree trivially.
    stats.agreement = AgreementReport{1.0, 1.0, 1.0, 0};
    return;
  }
  stats.agreement = cohen_kappa(a, b);
}

ResolveOutcome resolve_at(LoopState& s, uint64_t item_id, const Resolution& res, const std::string& timestamp) {
  if (item_id == 0 || item_id > s.items.size()) fail(ErrorKind::kState, "unknown review item " + std::to_string(item_id));
  ReviewItem& it = s.items[item_id - 1];
  if (it.status == ItemStatus::kResolved)
    fail(ErrorKind::kState, "review item " + std::to_string(item_id) + " is already resolved");
  if (res.version != it.version)
    fail(ErrorKind::kState, "stale version " + std::to_string(res.version) + " for review item " +
                                std::to_string(item_id) + " (current " + std::to_string(it.version) + ")");
  if (res.decisions.size() != it.spans.size())
    fail(ErrorKind::kContract, "review item " + std::to_string(item_id) + " has " + std::to_string(it.spans.size()) +
                                   " proposed spans but " + std::to_string(res.decisions.size()) + " decisions");
  const bool consensus = s.config.reviewers.size() >= 2;
  if (consensus && std::find(s.config.reviewers.begin(), s.config.reviewers.end(), res.reviewer) ==
                       s.config.reviewers.end())
    fail(ErrorKind::kContract, "reviewer '" + res.reviewer + "' is not registered");

  const size_t n = it.proposed.size();
  std::vector<Span> final_spans;
  for (size_t i = 0; i < it.spans.size(); ++i) {
    const auto& d = res.decisions[i];
    switch (d.action) {
      case Action::kAccept: final_spans.push_back(it.spans[i]); break;
      case Action::kReject: break;
      case Action::kEdit:
        for (const Span& sp : d.spans) {
          check_span(sp, n, "edited");
          final_spans.push_back(sp);
        }
        break;
    }
  }
  for (const Span& sp : res.added) {
    check_span(sp, n, "added");
    final_spans.push_back(sp);
  }
  std::sort(final_spans.begin(), final_spans.end());
  final_spans.erase(std::unique(final_spans.begin(), final_spans.end()), final_spans.end());

  bool resolved = true;
  if (consensus) {
    auto vote = std::find_if(it.votes.begin(), it.votes.end(), [&](const auto& v) { return v.first == res.reviewer; });
    if (vote == it.votes.end()) it.votes.emplace_back(res.reviewer, final_spans);
    else vote->second = final_spans;
    const bool everyone = it.votes.size() == s.config.reviewers.size();
    const bool agree = std::all_of(it.votes.begin(), it.votes.end(),
                                   [&](const auto& v) { return v.second == it.votes.front().second; });
    resolved = everyone && agree;
    if (everyone && !agree) {
      it.note = "reviewers disagree; discuss and resubmit";
      if (!res.note.empty()) it.note += ": " + res.note;
    } else if (!res.note.empty()) {
      it.note = res.note;
    }
  } else if (!res.note.empty()) {
    it.note = res.note;
  }
  ++it.version;

  AuditEntry e;
  e.seq = s.audit.size() + 1;
  e.type = AuditEntry::Type::kResolve;
  e.timestamp = timestamp;
  e.item = it.id;
  e.sentence = it.sentence;
  e.increment = it.increment;
  e.resolution = res;
  e.final_spans = final_spans;
  e.resolved = resolved;
  s.audit.push_back(std::move(e));

  if (resolved) {
    const auto& base = s.sentences[it.sentence];
    s.gold[it.sentence] = bio_from_spans(base.text, base.tokens, final_spans, Provenance::kHuman);
    s.pool[it.sentence] = Pool::kGold;
    it.status = ItemStatus::kResolved;
    update_agreement(s, it.increment);
  }
  return {resolved, it.version};
}

void log_training_at(LoopState& s, const std::vector<size_t>& ids, uint64_t checksum, const std::string& timestamp) {
  for (size_t id : ids) {
    if (id >= s.size() || s.pool[id] != Pool::kGold || !s.gold[id])
      fail(ErrorKind::kState, "training set holds sentence " + std::to_string(id) + " which is not gold");
  }
  AuditEntry e;
  e.seq = s.audit.size() + 1;
  e.type = AuditEntry::Type::kTrain;
  e.timestamp = timestamp;
  e.increment = s.increments_done;
  e.training_set = ids;
  e.model_checksum = checksum;
  s.audit.push_back(std::move(e));
  s.model_checksum = checksum;
}

}  // namespace

void seed_increment(LoopState& state, const Lexicon& lexicon, const Clock& clock) {
  require(!state.sentences.empty(), "bootstrap needs a non-empty corpus");
  require(state.increments_done == 0, "seed increment requires increments_done == 0 (have " +
                                          std::to_string(state.increments_done) + ")");
  require(!lexicon.empty(), "seed increment needs a non-empty lexicon");
  begin_increment(state, Provenance::kLexicon);
  const size_t target = cumulative_target(state.size(), state.config.increment_size, 1);
  const std::string ts = clock();
  while (state.cursor < target) {
    const auto& base = state.sentences[state.order[state.cursor]];
    const auto spans = lexicon_matches(base.tokens, lexicon);
    auto proposed = bio_from_spans(base.text, base.tokens, spans, Provenance::kLexicon);
    std::vector<double> p(proposed.size(), 0.0);
    for (size_t k = 0; k < p.size(); ++k) p[k] = is_bias(proposed.tags[k]) ? 1.0 : 0.0;
    queue_item(state, std::move(proposed.tags), std::move(p), Provenance::kLexicon, ts);
  }
}

bool propose_increment(LoopState& state, const ModelParams& params, const Vocab& vocab, const Clock& clock) {
  if (state.pending() > 0)
    fail(ErrorKind::kState, std::to_string(state.pending()) + " review items are still pending");
  if (state.cursor >= state.order.size()) return false;
  require(state.count(Pool::kGold) > 0, "propose needs a non-empty gold pool");
  begin_increment(state, Provenance::kModel);
  const size_t target = cumulative_target(state.size(), state.config.increment_size, state.increments_done);
  const std::string ts = clock();
  while (state.cursor < target) {
    const auto& base = state.sentences[state.order[state.cursor]];
    const auto preds = predict_tokens(base.tokens, params, vocab);
    std::vector<Tag> tags;
    std::vector<double> p;
    for (const auto& tp : preds) {
      tags.push_back(tp.tag);
      p.push_back(tp.p_bias);
    }
    queue_item(state, bio_tags(tags), std::move(p), Provenance::kModel, ts);
  }
  return true;
}

ResolveOutcome resolve(LoopState& state, uint64_t item_id, const Resolution& resolution, const Clock& clock) {
  return resolve_at(state, item_id, resolution, clock());
}

std::vector<size_t> gold_ids(const LoopState& state) {
  std::vector<size_t> ids;
  for (size_t i = 0; i < state.size(); ++i)
    if (state.pool[i] == Pool::kGold) ids.push_back(i);
  return ids;
}

void log_training(LoopState& state, const std::vector<size_t>& ids, uint64_t checksum, const Clock& clock) {
  log_training_at(state, ids, checksum, clock());
}

LoopState replay(std::vector<Record> records, const LoopConfig& config, const std::vector<AuditEntry>& audit) {
  LoopState s = make_loop(std::move(records), config);
  for (const auto& e : audit) {
    if (e.seq != s.audit.size() + 1) fail(ErrorKind::kState, "audit log sequence gap at " + std::to_string(e.seq));
    switch (e.type) {
      case AuditEntry::Type::kQueue:
        if (e.increment == s.increments_done + 1) begin_increment(s, e.provenance);
        if (e.increment != s.increments_done)
          fail(ErrorKind::kState, "audit entry " + std::to_string(e.seq) + " skips an increment");
        if (s.cursor >= s.order.size() || s.order[s.cursor] != e.sentence)
          fail(ErrorKind::kState, "audit entry " + std::to_string(e.seq) + " does not follow the sampling order");
        queue_item(s, e.proposed_tags, e.p_bias, e.provenance, e.timestamp);
        break;
      case AuditEntry::Type::kResolve:
        resolve_at(s, e.item, e.resolution, e.timestamp);
        break;
      case AuditEntry::Type::kTrain:
        log_training_at(s, e.training_set, e.model_checksum, e.timestamp);
        break;
    }
  }
  return s;
}

Resolver auto_accept_resolver(double tau) {
  return [tau](const LoopState&, const ReviewItem& item, const std::string& reviewer) {
    Resolution r;
    r.reviewer = reviewer;
    r.version = item.version;
    for (const Span& sp : item.spans) {
      bool sure = true;
      for (size_t k = sp.begin; k < sp.end; ++k) sure = sure && item.p_bias[k] >= tau;
      r.decisions.push_back({sure ? Action::kAccept : Action::kReject, {}});
    }
    return r;
  };
}

Resolver reference_resolver(std::vector<TaggedSentence> reference) {
  return [ref = std::move(reference)](const LoopState&, const ReviewItem& item, const std::string& reviewer) {
    require(item.sentence < ref.size(), "reference resolver has no sentence " + std::to_string(item.sentence));
    const auto want = spans_of(ref[item.sentence]);
    Resolution r;
    r.reviewer = reviewer;
    r.version = item.version;
    for (const Span& sp : item.spans) {
      const bool ok = std::find(want.begin(), want.end(), sp) != want.end();
      r.decisions.push_back({ok ? Action::kAccept : Action::kReject, {}});
    }
    for (const Span& sp : want)
      if (std::find(item.spans.begin(), item.spans.end(), sp) == item.spans.end()) r.added.push_back(sp);
    return r;
  };
}

LoopRunResult run_loop(LoopState& state, const Lexicon& lexicon, const Resolver& resolver, const LoopRunConfig& run,
                       const Clock& clock) {
  LoopRunResult out;
  std::vector<std::vector<Token>> all;
  for (const auto& s : state.sentences) all.push_back(s.tokens);
  out.vocab = build_vocab(all);
  ModelConfig cfg = run.model;
  cfg.vocab_size = out.vocab.size();

  std::vector<std::string> reviewers = state.config.reviewers;
  if (reviewers.empty()) reviewers.push_back("auto");

  auto resolve_all = [&] {
    for (size_t i = 0; i < state.items.size(); ++i) {
      for (const auto& reviewer : reviewers) {
        const ReviewItem& it = state.items[i];
        if (it.status != ItemStatus::kPending) break;
        Resolution r = resolver(state, it, reviewer);
        r.reviewer = reviewer;
        r.version = it.version;
        resolve(state, it.id, r, clock);
      }
    }
    if (state.pending() > 0)
      fail(ErrorKind::kState, "loop blocked: " + std::to_string(state.pending()) + " review items still pending");
  };

  bool have_model = false;
  size_t trained_on = 0;
  auto train_gold = [&] {
    const auto ids = gold_ids(state);
    std::vector<TaggedSentence> gold;
    for (size_t id : ids) gold.push_back(*state.gold[id]);
    const auto examples = make_examples(gold, out.vocab, cfg.max_len);
    if (!have_model || !state.config.fine_tune) out.model = init_model(cfg, run.init_seed);
    train(out.model, examples, {}, run.hyper);
    have_model = true;
    trained_on = ids.size();
    log_training(state, ids, model_checksum(out.model), clock);
  };

  if (state.increments_done == 0 && run.max_increments > 0) {
    seed_increment(state, lexicon, clock);
    resolve_all();
  }
  while (state.increments_done < run.max_increments && state.cursor < state.order.size()) {
    train_gold();
    if (!propose_increment(state, out.model, out.vocab, clock)) break;
    resolve_all();
  }
  if (state.count(Pool::kGold) > 0 && (!have_model || trained_on != state.count(Pool::kGold))) train_gold();
  if (!have_model) out.model = init_model(cfg, run.init_seed);
  state.check_invariants();
  out.increments = state.increments;
  return out;
}

std::vector<AgreementReport> kappa_series(const LoopState& state) {
  std::vector<AgreementReport> out;
  for (const auto& inc : state.increments)
    if (inc.agreement) out.push_back(*inc.agreement);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json spans_to_json(const std::vector<Span>& spans) {
  json a = json::array();
  for (const Span& s : spans) a.push_back({s.begin, s.end});
  return a;
}

std::vector<Span> spans_from_json(const json& a) {
  std::vector<Span> out;
  for (const auto& s : a) out.push_back({s.at(0).get<size_t>(), s.at(1).get<size_t>()});
  return out;
}

json tags_to_json(const std::vector<Tag>& tags) {
  json a = json::array();
  for (Tag t : tags) a.push_back(tag_name(t));
  return a;
}

std::vector<Tag> tags_from_json(const json& a) {
  std::vector<Tag> out;
  for (const auto& t : a) {
    const auto tag = parse_tag(t.get<std::string>());
    if (!tag) fail(ErrorKind::kParse, "unknown tag '" + t.get<std::string>() + "'");
    out.push_back(*tag);
  }
  return out;
}

Provenance provenance_from(const json& j) {
  const auto p = parse_provenance(j.get<std::string>());
  if (!p) fail(ErrorKind::kParse, "unknown provenance '" + j.get<std::string>() + "'");
  return *p;
}

json resolution_to_json(const Resolution& r) {
  json d = json::array();
  for (const auto& x : r.decisions) d.push_back({{"action", action_name(x.action)}, {"spans", spans_to_json(x.spans)}});
  return {{"reviewer", r.reviewer},
          {"version", r.version},
          {"decisions", d},
          {"added", spans_to_json(r.added)},
          {"note", r.note}};
}

Resolution resolution_from_json(const json& j) {
  Resolution r;
  r.reviewer = j.at("reviewer").get<std::string>();
  r.version = j.at("version").get<uint64_t>();
  for (const auto& d : j.at("decisions")) {
    const auto a = parse_action(d.at("action").get<std::string>());
    if (!a) fail(ErrorKind::kParse, "unknown review action '" + d.at("action").get<std::string>() + "'");
    r.decisions.push_back({*a, spans_from_json(d.value("spans", json::array()))});
  }
  r.added = spans_from_json(j.value("added", json::array()));
  r.note = j.value("note", "");
  return r;
}

std::string_view type_name(AuditEntry::Type t) {
  switch (t) {
    case AuditEntry::Type::kQueue: return "queue";
    case AuditEntry::Type::kResolve: return "resolve";
    case AuditEntry::Type::kTrain: return "train";
  }
  return "queue";
}

json audit_json(const AuditEntry& e) {
  json j{{"seq", e.seq}, {"type", type_name(e.type)}, {"timestamp", e.timestamp}, {"increment", e.increment}};
  switch (e.type) {
    case AuditEntry::Type::kQueue:
      j["item"] = e.item;
      j["sentence"] = e.sentence;
      j["proposed_tags"] = tags_to_json(e.proposed_tags);
      j["p_bias"] = e.p_bias;
      j["provenance"] = provenance_name(e.provenance);
      break;
    case AuditEntry::Type::kResolve:
      j["item"] = e.item;
      j["sentence"] = e.sentence;
      j["resolution"] = resolution_to_json(e.resolution);
      j["final_spans"] = spans_to_json(e.final_spans);
      j["resolved"] = e.resolved;
      break;
    case AuditEntry::Type::kTrain:
      j["training_set"] = e.training_set;
      j["model_checksum"] = e.model_checksum;
      break;
  }
  return j;
}

AuditEntry audit_from(const json& j) {
  AuditEntry e;
  e.seq = j.at("seq").get<uint64_t>();
  const auto type = j.at("type").get<std::string>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.increment = j.at("increment").get<size_t>();
  if (type == "queue") {
    e.type = AuditEntry::Type::kQueue;
    e.item = j.at("item").get<uint64_t>();
    e.sentence = j.at("sentence").get<size_t>();
    e.proposed_tags = tags_from_json(j.at("proposed_tags"));
    e.p_bias = j.at("p_bias").get<std::vector<double>>();
    e.provenance = provenance_from(j.at("provenance"));
  } else if (type == "resolve") {
    e.type = AuditEntry::Type::kResolve;
    e.item = j.at("item").get<uint64_t>();
    e.sentence = j.at("sentence").get<size_t>();
    e.resolution = resolution_from_json(j.at("resolution"));
    e.final_spans = spans_from_json(j.at("final_spans"));
    e.resolved = j.at("resolved").get<bool>();
  } else if (type == "train") {
    e.type = AuditEntry::Type::kTrain;
    e.training_set = j.at("training_set").get<std::vector<size_t>>();
    e.model_checksum = j.at("model_checksum").get<uint64_t>();
  } else {
    fail(ErrorKind::kParse, "unknown audit entry type '" + type + "'");
  }
  return e;
}

json agreement_json(const AgreementReport& a) {
  return {{"observed_agreement", a.observed_agreement},
          {"expected_agreement", a.expected_agreement},
          {"kappa", a.kappa},
          {"n_items", a.n_items}};
}

}  // namespace

std::string audit_entry_to_json(const AuditEntry& e) { return audit_json(e).dump(); }

AuditEntry audit_entry_from_json(std::string_view line) {
  try {
    return audit_from(json::parse(line));
  } catch (const json::exception& ex) {
    fail(ErrorKind::kParse, std::string("audit entry: ") + ex.what());
  }
}

std::string loop_state_to_json(const LoopState& s) {
  json j;
  j["config"] = {{"increment_size", s.config.increment_size},
                 {"seed", s.config.seed},
                 {"reviewers", s.config.reviewers},
                 {"fine_tune", s.config.fine_tune}};
  json recs = json::array();
  for (const auto& r : s.records)
    recs.push_back({{"Dataset", r.dataset},
                    {"Text", r.text},
                    {"BiasedWords", r.biased_words},
                    {"AspectOfBias", r.aspect_of_bias},
                    {"Label", label_name(r.label)}});
  j["records"] = recs;
  j["order"] = s.order;
  j["cursor"] = s.cursor;
  json pools = json::array();
  for (Pool p : s.pool) pools.push_back(pool_name(p));
  j["pool"] = pools;
  json gold = json::array();
  for (const auto& g : s.gold) gold.push_back(g ? tags_to_json(g->tags) : json(nullptr));
  j["gold"] = gold;
  json items = json::array();
  for (const auto& it : s.items) {
    json votes = json::array();
    for (const auto& [who, spans] : it.votes) votes.push_back({{"reviewer", who}, {"spans", spans_to_json(spans)}});
    items.push_back({{"id", it.id},
                     {"sentence", it.sentence},
                     {"increment", it.increment},
                     {"tags", tags_to_json(it.proposed.tags)},
                     {"provenance", provenance_name(it.proposed.provenance.empty() ? Provenance::kModel
                                                                                    : it.proposed.provenance.front())},
                     {"p_bias", it.p_bias},
                     {"status", it.status == ItemStatus::kResolved ? "resolved" : "pending"},
                     {"version", it.version},
                     {"votes", votes},
                     {"note", it.note}});
  }
  j["items"] = items;
  json audit = json::array();
  for (const auto& e : s.audit) audit.push_back(audit_json(e));
  j["audit"] = audit;
  json incs = json::array();
  for (const auto& inc : s.increments)
    incs.push_back({{"increment", inc.increment},
                    {"items", inc.items},
                    {"source", provenance_name(inc.source)},
                    {"agreement", inc.agreement ? agreement_json(*inc.agreement) : json(nullptr)}});
  j["increments"] = incs;
  j["increments_done"] = s.increments_done;
  j["model_checksum"] = s.model_checksum;
  return j.dump();
}

LoopState loop_state_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    LoopConfig cfg;
    const auto& c = j.at("config");
    cfg.increment_size = c.at("increment_size").get<double>();
    cfg.seed = c.at("seed").get<uint64_t>();
    cfg.reviewers = c.at("reviewers").get<std::vector<std::string>>();
    cfg.fine_tune = c.at("fine_tune").get<bool>();
    std::vector<Record> records;
    for (const auto& r : j.at("records")) {
      Record rec;
      rec.dataset = r.at("Dataset").get<std::string>();
      rec.text = r.at("Text").get<std::string>();
      rec.biased_words = r.at("BiasedWords").get<std::vector<std::string>>();
      rec.aspect_of_bias = r.at("AspectOfBias").get<std::string>();
      const auto label = parse_label(r.at("Label").get<std::string>());
      if (!label) fail(ErrorKind::kParse, "bad record label");
      rec.label = *label;
      records.push_back(std::move(rec));
    }
    LoopState s = make_loop(std::move(records), cfg);
    s.order = j.at("order").get<std::vector<size_t>>();
    s.cursor = j.at("cursor").get<size_t>();
    const auto& pools = j.at("pool");
    const auto& gold = j.at("gold");
    if (pools.size() != s.size() || gold.size() != s.size()) fail(ErrorKind::kParse, "pool table size mismatch");
    for (size_t i = 0; i < s.size(); ++i) {
      const auto p = pools[i].get<std::string>();
      s.pool[i] = p == "gold" ? Pool::kGold : p == "proposed" ? Pool::kProposed : Pool::kRaw;
      if (!gold[i].is_null()) {
        TaggedSentence g = s.sentences[i];
        g.tags = tags_from_json(gold[i]);
        validate(g);
        s.gold[i] = std::move(g);
      }
    }
    for (const auto& ij : j.at("items")) {
      ReviewItem it;
      it.id = ij.at("id").get<uint64_t>();
      it.sentence = ij.at("sentence").get<size_t>();
      it.increment = ij.at("increment").get<size_t>();
      it.proposed = s.sentences.at(it.sentence);
      it.proposed.tags = tags_from_json(ij.at("tags"));
      it.proposed.provenance.assign(it.proposed.size(), provenance_from(ij.at("provenance")));
      validate(it.proposed);
      it.p_bias = ij.at("p_bias").get<std::vector<double>>();
      it.spans = spans_of(it.proposed);
      it.status = ij.at("status").get<std::string>() == "resolved" ? ItemStatus::kResolved : ItemStatus::kPending;
      it.version = ij.at("version").get<uint64_t>();
      for (const auto& v : ij.at("votes"))
        it.votes.emplace_back(v.at("reviewer").get<std::string>(), spans_from_json(v.at("spans")));
      it.note = ij.at("note").get<std::string>();
      s.items.push_back(std::move(it));
    }
    for (const auto& e : j.at("audit")) s.audit.push_back(audit_from(e));
    for (const auto& ij : j.at("increments")) {
      IncrementStats inc;
      inc.increment = ij.at("increment").get<size_t>();
      inc.items = ij.at("items").get<size_t>();
      inc.source = provenance_from(ij.at("source"));
      if (!ij.at("agreement").is_null()) {
        const auto& a = ij.at("agreement");
        inc.agreement = AgreementReport{a.at("observed_agreement").get<double>(), a.at("expected_agreement").get<double>(),
                                        a.at("kappa").get<double>(), a.at("n_items").get<size_t>()};
      }
      s.increments.push_back(inc);
    }
    s.increments_done = j.at("increments_done").get<size_t>();
    s.model_checksum = j.at("model_checksum").get<uint64_t>();
    s.check_invariants();
    return s;
  } catch (const json::exception& ex) {
    fail(ErrorKind::kParse, std::string("loop state: ") + ex.what());
  }
}

}  // namespace biasner
