#include "biasner/service.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "biasner/conll.hpp"
#include "biasner/error.hpp"
#include "biasner/eval.hpp"
#include "biasner/ingest.hpp"
#include "biasner/lexicon.hpp"

namespace biasner {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

ServiceConfig ServiceConfig::from_json(std::string_view text) {
  ServiceConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    fail(ErrorKind::kConfig, std::string("service config: ") + ex.what());
  }
  if (!j.is_object()) fail(ErrorKind::kConfig, "service config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "host") c.host = v.get<std::string>();
      else if (k == "port") c.port = v.get<int>();
      else if (k == "workspace") c.workspace = v.get<std::string>();
      else if (k == "init_seed") c.init_seed = v.get<uint64_t>();
      else if (k == "lease_seconds") c.lease_seconds = v.get<double>();
      else if (k == "request_log") c.request_log = v.get<std::string>();
      else if (k == "model") c.model = ModelConfig::from_json(v.dump());
      else if (k == "hyper") {
        for (auto h = v.begin(); h != v.end(); ++h) {
          const std::string& hk = h.key();
          if (hk == "epochs") c.hyper.epochs = h.value().get<size_t>();
          else if (hk == "batch_size") c.hyper.batch_size = h.value().get<size_t>();
          else if (hk == "learning_rate") c.hyper.learning_rate = h.value().get<double>();
          else if (hk == "weight_decay") c.hyper.weight_decay = h.value().get<double>();
          else if (hk == "momentum") c.hyper.momentum = h.value().get<double>();
          else if (hk == "seed") c.hyper.seed = h.value().get<uint64_t>();
          else if (hk == "optimizer") {
            const auto o = h.value().get<std::string>();
            if (o == "adamw") c.hyper.optimizer = Optimizer::kAdamW;
            else if (o == "sgd") c.hyper.optimizer = Optimizer::kSgdMomentum;
            else fail(ErrorKind::kConfig, "unknown optimizer '" + o + "' (expected adamw or sgd)");
          } else fail(ErrorKind::kConfig, "unknown hyper key '" + hk + "'");
        }
      } else fail(ErrorKind::kConfig, "unknown service config key '" + k + "'");
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::kConfig, std::string("service config: ") + ex.what());
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  ServiceConfig c = path.empty() ? ServiceConfig{} : from_json(read_file(path));
  c.apply_env();
  return c;
}

void ServiceConfig::apply_env() {
  if (const char* p = std::getenv("BIASNER_PORT"); p && *p) {
    try {
      port = std::stoi(p);
    } catch (...) {
      fail(ErrorKind::kConfig, std::string("BIASNER_PORT is not a number: ") + p);
    }
  }
  if (const char* w = std::getenv("BIASNER_WORKSPACE"); w && *w) workspace = w;
}

// ---------------------------------------------------------------------------
// Service

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void http_fail(int status, std::string code, std::string message) {
  throw HttpError{status, std::move(code), std::move(message)};
}

std::pair<int, std::string> status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return {400, "config"};
    case ErrorKind::kIngest: return {422, "ingest"};
    case ErrorKind::kParse: return {400, "parse"};
    case ErrorKind::kContract: return {422, "contract"};
    case ErrorKind::kValidation: return {422, "validation"};
    case ErrorKind::kSplit: return {422, "split"};
    case ErrorKind::kState: return {409, "conflict"};
    case ErrorKind::kLoad: return {500, "load"};
    case ErrorKind::kNumeric: return {500, "numeric"};
    case ErrorKind::kIo: return {500, "io"};
  }
  return {500, "internal"};
}

std::string error_body(const std::string& code, const std::string& message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) http_fail(400, "invalid_request", "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& ex) {
    http_fail(400, "invalid_json", ex.what());
  }
}

json span_pair(const Span& s) { return json::array({s.begin, s.end}); }

std::vector<Span> spans_from(const json& a, const char* what) {
  if (!a.is_array()) http_fail(400, "invalid_request", std::string(what) + " must be an array of [begin, end]");
  std::vector<Span> out;
  for (const auto& s : a) {
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() || !s[1].is_number_unsigned())
      http_fail(400, "invalid_request", std::string(what) + " entries must be [begin, end] token indices");
    out.push_back({s[0].get<size_t>(), s[1].get<size_t>()});
  }
  return out;
}

json item_json(const LoopState& s, const ReviewItem& it) {
  json tokens = json::array();
  for (size_t k = 0; k < it.proposed.size(); ++k) {
    const Token& t = it.proposed.tokens[k];
    tokens.push_back({{"surface", t.surface},
                      {"start", t.start},
                      {"end", t.end},
                      {"tag", tag_name(it.proposed.tags[k])},
                      {"p_bias", it.p_bias[k]}});
  }
  json spans = json::array();
  for (const Span& sp : it.spans) {
    double p = 0.0;
    for (size_t k = sp.begin; k < sp.end; ++k) p += it.p_bias[k];
    spans.push_back({{"begin", sp.begin},
                     {"end", sp.end},
                     {"char_start", it.proposed.tokens[sp.begin].start},
                     {"char_end", it.proposed.tokens[sp.end - 1].end},
                     {"p_bias", p / static_cast<double>(sp.size())}});
  }
  json votes = json::array();
  for (const auto& [who, vs] : it.votes) {
    json a = json::array();
    for (const Span& sp : vs) a.push_back(span_pair(sp));
    votes.push_back({{"reviewer", who}, {"spans", a}});
  }
  return {{"id", it.id},
          {"sentence", it.sentence},
          {"increment", it.increment},
          {"version", it.version},
          {"text", it.proposed.text},
          {"dataset", s.records[it.sentence].dataset},
          {"provenance", provenance_name(it.proposed.provenance.empty() ? Provenance::kModel
                                                                         : it.proposed.provenance.front())},
          {"status", it.status == ItemStatus::kResolved ? "resolved" : "pending"},
          {"tokens", tokens},
          {"spans", spans},
          {"votes", votes},
          {"note", it.note}};
}

json loop_summary(const Session& session) {
  if (!session.loop) return {{"initialized", false}, {"model_checksum", nullptr}};
  const LoopState& s = *session.loop;
  return {{"initialized", true},
          {"size", s.size()},
          {"pools", {{"raw", s.count(Pool::kRaw)}, {"proposed", s.count(Pool::kProposed)}, {"gold", s.count(Pool::kGold)}}},
          {"increments_done", s.increments_done},
          {"pending", s.pending()},
          {"complete", s.cursor == s.order.size() && s.pending() == 0},
          {"audit_length", s.audit.size()},
          {"reviewers", s.config.reviewers},
          {"model_checksum", session.model ? json(model_checksum(*session.model)) : json(nullptr)}};
}

std::vector<Record> records_from_conll(std::string_view data, const std::string& dataset) {
  std::vector<Record> out;
  for (const auto& s : parse_conll(data)) {
    Record r;
    r.dataset = dataset;
    r.text = s.text;
    for (const Span& sp : spans_of(s)) {
      std::string phrase;
      for (size_t k = sp.begin; k < sp.end; ++k) phrase += (k > sp.begin ? " " : "") + s.tokens[k].surface;
      r.biased_words.push_back(phrase);
    }
    r.label = r.biased_words.empty() ? Label::kNonBiased : Label::kBiased;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

struct Service::Impl {
  struct Job {
    uint64_t id = 0;
    std::string kind;
    std::string status = "queued";
    json result;
    std::string error_code;
    std::string error;
    std::function<json()> run;
  };
  struct Lease {
    std::string reviewer;
    std::chrono::steady_clock::time_point expires;
  };

  ServiceConfig cfg;
  httplib::Server server;
  std::thread server_thread;
  int bound_port = 0;

  std::shared_mutex mu;  // guards session
  Session session;

  std::mutex lease_mu;
  std::map<uint64_t, Lease> leases;

  std::mutex jobs_mu;
  std::condition_variable jobs_cv;
  std::deque<uint64_t> queue;
  std::map<uint64_t, Job> jobs;
  uint64_t next_job = 1;
  bool stopping = false;
  std::thread worker;

  std::mutex log_mu;
  std::ofstream log;

  explicit Impl(ServiceConfig c) : cfg(std::move(c)) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.workspace, ec);
    if (ec) fail(ErrorKind::kIo, "cannot create workspace " + cfg.workspace + ": " + ec.message());
    session = restore(cfg.workspace);
    const std::string log_path =
        cfg.request_log.empty() ? (std::filesystem::path(cfg.workspace) / "requests.jsonl").string() : cfg.request_log;
    log.open(log_path, std::ios::app);
    worker = std::thread([this] { work(); });
    routes();
  }

  ~Impl() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    {
      std::lock_guard lk(jobs_mu);
      stopping = true;
    }
    jobs_cv.notify_all();
    if (worker.joinable()) worker.join();
  }

  void save() { persist(cfg.workspace, session); }

  // --- jobs ----------------------------------------------------------------

  uint64_t submit(std::string kind, std::function<json()> run) {
    std::lock_guard lk(jobs_mu);
    const uint64_t id = next_job++;
    Job job;
    job.id = id;
    job.kind = std::move(kind);
    job.run = std::move(run);
    jobs.emplace(id, std::move(job));
    queue.push_back(id);
    jobs_cv.notify_one();
    return id;
  }

  void work() {
    for (;;) {
      std::function<json()> run;
      uint64_t id = 0;
      {
        std::unique_lock lk(jobs_mu);
        jobs_cv.wait(lk, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        id = queue.front();
        queue.pop_front();
        jobs[id].status = "running";
        run = std::move(jobs[id].run);
      }
      json result;
      std::string code, message;
      try {
        result = run();
      } catch (const Error& ex) {
        code = status_for(ex.kind()).second;
        message = ex.what();
      } catch (const HttpError& ex) {
        code = ex.code;
        message = ex.message;
      } catch (const std::exception& ex) {
        code = "internal";
        message = ex.what();
      }
      std::lock_guard lk(jobs_mu);
      Job& job = jobs[id];
      if (code.empty()) {
        job.status = "done";
        job.result = std::move(result);
      } else {
        job.status = "failed";
        job.error_code = code;
        job.error = message;
      }
    }
  }

  json train_job(const json& body) {
    std::unique_lock lk(mu);
    if (!session.loop) http_fail(409, "no_loop", "no bootstrap loop; POST /loop/seed first");
    LoopState& s = *session.loop;
    const auto ids = gold_ids(s);
    if (ids.empty()) http_fail(409, "empty_gold", "gold pool is empty");
    std::vector<TaggedSentence> gold;
    for (size_t id : ids) gold.push_back(*s.gold[id]);
    ModelConfig mc = cfg.model;
    mc.vocab_size = session.vocab->size();
    const auto examples = make_examples(gold, *session.vocab, mc.max_len);
    Hyper h = cfg.hyper;
    if (body.contains("epochs")) h.epochs = body["epochs"].get<size_t>();
    if (body.contains("learning_rate")) h.learning_rate = body["learning_rate"].get<double>();
    if (body.contains("seed")) h.seed = body["seed"].get<uint64_t>();
    const uint64_t init_seed = body.value("init_seed", cfg.init_seed);
    ModelParams params = s.config.fine_tune && session.model && session.model->config == mc
                             ? *session.model
                             : init_model(mc, init_seed);
    const TrainReport report = train(params, examples, {}, h);
    log_training(s, ids, model_checksum(params));
    session.model = std::move(params);
    save();
    return {{"model_checksum", model_checksum(*session.model)},
            {"trained_on", ids.size()},
            {"epochs_run", report.epochs_run},
            {"train_loss", report.epochs.empty() ? 0.0 : report.epochs.back().train_loss}};
  }

  json propose_job() {
    std::unique_lock lk(mu);
    if (!session.loop) http_fail(409, "no_loop", "no bootstrap loop; POST /loop/seed first");
    if (!session.model) http_fail(409, "no_model", "no trained model; POST /loop/train first");
    LoopState& s = *session.loop;
    const size_t before = s.items.size();
    const bool queued = propose_increment(s, *session.model, *session.vocab);
    save();
    return {{"complete", !queued}, {"increment", s.increments_done}, {"queued", s.items.size() - before}};
  }

  // Held-out report for a model-proposed increment once it is fully reviewed.
  void update_metrics(const LoopState& s, size_t increment) {
    const auto& inc = s.increments.at(increment - 1);
    if (!inc.agreement || inc.source != Provenance::kModel) return;
    Predicted pred;
    std::vector<TaggedSentence> gold;
    std::vector<std::string> types;
    for (const auto& it : s.items) {
      if (it.increment != increment) continue;
      TaggedSentence p = collapse_tags(it.proposed);
      p.provenance.assign(p.size(), Provenance::kModel);
      pred.sentences.push_back(std::move(p));
      pred.p_bias.push_back(it.p_bias);
      gold.push_back(*s.gold[it.sentence]);
      types.push_back(s.records[it.sentence].aspect_of_bias);
    }
    session.metrics_json = evaluate(pred, gold, types).to_json();
  }

  // --- handlers ------------------------------------------------------------

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler guarded(std::function<json(const httplib::Request&, httplib::Response&)> fn) {
    return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        json out = fn(req, res);
        if (!out.is_null()) res.set_content(out.dump(), "application/json");
      } catch (const HttpError& ex) {
        res.status = ex.status;
        res.set_content(error_body(ex.code, ex.message), "application/json");
      } catch (const Error& ex) {
        const auto [status, code] = status_for(ex.kind());
        res.status = status;
        res.set_content(error_body(code, ex.what()), "application/json");
      } catch (const json::exception& ex) {
        res.status = 400;
        res.set_content(error_body("invalid_request", ex.what()), "application/json");
      }
    };
  }

  void routes() {
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      json line{{"ts", utc_now()}, {"method", req.method}, {"path", req.path}, {"status", res.status}};
      std::lock_guard lk(log_mu);
      log << line.dump() << '\n';
      log.flush();
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        res.set_content(error_body(res.status == 404 ? "not_found" : "http_error", "no such endpoint"),
                        "application/json");
      }
    });

    server.Get("/health", guarded([](const auto&, auto&) { return json{{"status", "ok"}}; }));

    server.Post("/corpora", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const std::string format = body.value("format", "jsonl");
      if (!body.contains("data") || !body["data"].is_string())
        http_fail(400, "invalid_request", "body needs a string field 'data'");
      const std::string data = body["data"].get<std::string>();
      std::vector<Record> records;
      json stats;
      if (format == "jsonl") {
        ColumnMap map;
        if (body.contains("column_map")) map = column_map_from_json(body["column_map"].dump());
        std::istringstream in(data);
        IngestResult r = ingest_jsonl(in, map);
        stats = {{"rows_read", r.rows_read}, {"dropped_empty", r.dropped_empty}, {"inconsistent", r.inconsistent}};
        records = std::move(r.records);
      } else if (format == "conll") {
        records = records_from_conll(data, body.value("dataset", "upload"));
        stats = {{"rows_read", records.size()}, {"dropped_empty", 0}, {"inconsistent", 0}};
      } else {
        http_fail(400, "invalid_request", "format must be 'jsonl' or 'conll'");
      }
      if (records.empty()) http_fail(422, "empty_corpus", "upload holds no usable records");
      std::unique_lock lk(mu);
      const std::string id = "c" + std::to_string(session.corpora.size() + 1);
      const size_t n = records.size();
      session.corpora.emplace_back(id, std::move(records));
      save();
      res.status = 201;
      stats["id"] = id;
      stats["records"] = n;
      return stats;
    }));

    server.Post("/loop/seed", guarded([this](const httplib::Request& req, httplib::Response&) {
      const json body = parse_body(req);
      std::unique_lock lk(mu);
      if (session.corpora.empty()) http_fail(409, "no_corpus", "upload a corpus first");
      if (session.loop && session.loop->increments_done > 0 && !body.value("reset", false))
        http_fail(409, "loop_exists", "a loop is already running; pass \"reset\": true to start over");
      const std::string id = body.value("corpus", session.corpora.back().first);
      auto c = std::find_if(session.corpora.begin(), session.corpora.end(),
                            [&](const auto& e) { return e.first == id; });
      if (c == session.corpora.end()) http_fail(404, "not_found", "unknown corpus '" + id + "'");
      LoopConfig lc;
      lc.increment_size = body.value("increment_size", lc.increment_size);
      lc.seed = body.value("seed", lc.seed);
      lc.reviewers = body.value("reviewers", lc.reviewers);
      lc.fine_tune = body.value("fine_tune", lc.fine_tune);
      const Lexicon lexicon = body.contains("lexicon") ? Lexicon::from_json(body["lexicon"].dump()) : Lexicon::starter();
      LoopState s = make_loop(c->second, lc);
      seed_increment(s, lexicon);
      std::vector<std::vector<Token>> all;
      for (const auto& t : s.sentences) all.push_back(t.tokens);
      session.vocab = build_vocab(all);
      session.model.reset();
      session.metrics_json.clear();
      session.loop = std::move(s);
      {
        std::lock_guard ll(lease_mu);
        leases.clear();
      }
      save();
      return loop_summary(session);
    }));

    server.Post("/loop/train", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const uint64_t id = submit("train", [this, body] { return train_job(body); });
      res.status = 202;
      return json{{"job", id}, {"status", "queued"}};
    }));

    server.Post("/loop/propose", guarded([this](const httplib::Request& req, httplib::Response& res) {
      parse_body(req);
      const uint64_t id = submit("propose", [this] { return propose_job(); });
      res.status = 202;
      return json{{"job", id}, {"status", "queued"}};
    }));

    server.Get(R"(/jobs/(\d+))", guarded([this](const httplib::Request& req, httplib::Response&) {
      const uint64_t id = std::stoull(req.matches[1]);
      std::lock_guard lk(jobs_mu);
      auto it = jobs.find(id);
      if (it == jobs.end()) http_fail(404, "not_found", "unknown job " + std::to_string(id));
      const Job& j = it->second;
      json out{{"id", j.id}, {"kind", j.kind}, {"status", j.status}};
      if (j.status == "done") out["result"] = j.result;
      if (j.status == "failed") out["error"] = {{"code", j.error_code}, {"message", j.error}};
      return out;
    }));

    server.Get("/loop/state", guarded([this](const auto&, auto&) {
      std::shared_lock lk(mu);
      return loop_summary(session);
    }));

    server.Get("/review/next", guarded([this](const httplib::Request& req, httplib::Response&) {
      const std::string reviewer = req.get_param_value("reviewer");
      if (reviewer.empty()) http_fail(400, "invalid_request", "query parameter 'reviewer' is required");
      std::shared_lock lk(mu);
      if (!session.loop) return json{{"item", nullptr}, {"pending", 0}};
      const LoopState& s = *session.loop;
      const bool consensus = s.config.reviewers.size() >= 2;
      if (consensus && std::find(s.config.reviewers.begin(), s.config.reviewers.end(), reviewer) ==
                           s.config.reviewers.end())
        http_fail(422, "contract", "reviewer '" + reviewer + "' is not registered");
      const auto now = std::chrono::steady_clock::now();
      std::lock_guard ll(lease_mu);
      for (const auto& it : s.items) {
        if (it.status != ItemStatus::kPending) continue;
        if (consensus) {
          const bool voted = std::any_of(it.votes.begin(), it.votes.end(),
                                         [&](const auto& v) { return v.first == reviewer; });
          if (voted && it.votes.size() < s.config.reviewers.size()) continue;
        } else {
          auto l = leases.find(it.id);
          if (l != leases.end() && l->second.reviewer != reviewer && l->second.expires > now) continue;
          leases[it.id] = {reviewer, now + std::chrono::milliseconds(static_cast<long>(cfg.lease_seconds * 1000))};
        }
        return json{{"item", item_json(s, it)}, {"pending", s.pending()}};
      }
      return json{{"item", nullptr}, {"pending", s.pending()}};
    }));

    server.Post(R"(/review/(\d+))", guarded([this](const httplib::Request& req, httplib::Response&) {
      const uint64_t item_id = std::stoull(req.matches[1]);
      const json body = parse_body(req);
      if (!body.contains("version") || !body["version"].is_number_unsigned())
        http_fail(400, "invalid_request", "body needs an unsigned 'version'");
      if (!body.contains("decisions") || !body["decisions"].is_array())
        http_fail(400, "invalid_request", "body needs a 'decisions' array");
      Resolution r;
      r.reviewer = body.value("reviewer", "");
      if (r.reviewer.empty()) http_fail(400, "invalid_request", "body needs a 'reviewer'");
      r.version = body["version"].get<uint64_t>();
      for (const auto& d : body["decisions"]) {
        const auto action = parse_action(d.value("action", ""));
        if (!action) http_fail(400, "invalid_request", "decision action must be accept, reject or edit");
        SpanDecision sd{*action, {}};
        if (*action == Action::kEdit) sd.spans = spans_from(d.value("spans", json::array()), "edit spans");
        r.decisions.push_back(std::move(sd));
      }
      r.added = spans_from(body.value("added", json::array()), "added");
      r.note = body.value("note", "");

      std::unique_lock lk(mu);
      if (!session.loop) http_fail(404, "not_found", "no review items");
      LoopState& s = *session.loop;
      if (item_id == 0 || item_id > s.items.size())
        http_fail(404, "not_found", "unknown review item " + std::to_string(item_id));
      const ReviewItem& it = s.items[item_id - 1];
      if (it.status == ItemStatus::kResolved)
        http_fail(409, "already_resolved", "review item " + std::to_string(item_id) + " is already resolved");
      if (it.version != r.version)
        http_fail(409, "stale_version", "item version is " + std::to_string(it.version) + ", request had " +
                                            std::to_string(r.version));
      const ResolveOutcome out = resolve(s, item_id, r);
      if (out.resolved) {
        update_metrics(s, s.items[item_id - 1].increment);
        std::lock_guard ll(lease_mu);
        leases.erase(item_id);
      }
      save();
      return json{{"resolved", out.resolved}, {"version", out.version}, {"item", item_json(s, s.items[item_id - 1])}};
    }));

    server.Post("/predict", guarded([this](const httplib::Request& req, httplib::Response&) {
      const json body = parse_body(req);
      if (!body.contains("text") || !body["text"].is_string())
        http_fail(400, "invalid_request", "body needs a string field 'text'");
      const std::string text = body["text"].get<std::string>();
      std::shared_lock lk(mu);
      if (!session.model || !session.vocab) http_fail(409, "no_model", "no trained model");
      const LabeledText lt = label_sequence(text, *session.model, *session.vocab);
      json tokens = json::array();
      for (size_t k = 0; k < lt.sentence.size(); ++k) {
        const Token& t = lt.sentence.tokens[k];
        tokens.push_back({{"surface", t.surface},
                          {"start", t.start},
                          {"end", t.end},
                          {"tag", tag_name(lt.sentence.tags[k])},
                          {"p_bias", lt.predictions[k].p_bias}});
      }
      json spans = json::array();
      for (const Span& sp : spans_of(expand_tags(lt.sentence))) {
        double p = 0.0;
        for (size_t k = sp.begin; k < sp.end; ++k) p += lt.predictions[k].p_bias;
        const size_t a = lt.sentence.tokens[sp.begin].start, b = lt.sentence.tokens[sp.end - 1].end;
        spans.push_back({{"begin", sp.begin},
                         {"end", sp.end},
                         {"char_start", a},
                         {"char_end", b},
                         {"text", text.substr(a, b - a)},
                         {"p_bias", p / static_cast<double>(sp.size())}});
      }
      return json{{"tokens", tokens}, {"spans", spans}, {"model_checksum", model_checksum(*session.model)}};
    }));

    server.Get("/metrics", guarded([this](const auto&, auto&) {
      std::shared_lock lk(mu);
      if (session.metrics_json.empty())
        http_fail(404, "not_available", "no model-proposed increment has been fully reviewed yet");
      return json::parse(session.metrics_json);
    }));

    server.Get("/agreement", guarded([this](const auto&, auto&) {
      std::shared_lock lk(mu);
      json incs = json::array();
      if (session.loop) {
        for (const auto& inc : session.loop->increments) {
          if (!inc.agreement) continue;
          incs.push_back({{"increment", inc.increment},
                          {"items", inc.items},
                          {"source", provenance_name(inc.source)},
                          {"kappa", inc.agreement->kappa},
                          {"observed_agreement", inc.agreement->observed_agreement},
                          {"expected_agreement", inc.agreement->expected_agreement},
                          {"n_items", inc.agreement->n_items}});
        }
      }
      return json{{"increments", incs}};
    }));

    server.Get("/audit", guarded([this](const auto&, auto&) {
      std::shared_lock lk(mu);
      json a = json::array();
      if (session.loop)
        for (const auto& e : session.loop->audit) a.push_back(json::parse(audit_entry_to_json(e)));
      return json{{"entries", a}};
    }));

    server.Get("/export/conll", guarded([this](const auto&, httplib::Response& res) {
      std::shared_lock lk(mu);
      std::vector<TaggedSentence> gold;
      if (session.loop)
        for (size_t id : gold_ids(*session.loop)) gold.push_back(*session.loop->gold[id]);
      res.set_content(emit_conll(gold), "text/plain");
      return json();
    }));
  }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() = default;

const ServiceConfig& Service::config() const { return impl_->cfg; }

int Service::start() {
  Impl& m = *impl_;
  if (m.cfg.port == 0) {
    m.bound_port = m.server.bind_to_any_port(m.cfg.host);
  } else {
    m.bound_port = m.server.bind_to_port(m.cfg.host, m.cfg.port) ? m.cfg.port : -1;
  }
  if (m.bound_port <= 0) fail(ErrorKind::kIo, "cannot bind " + m.cfg.host + ":" + std::to_string(m.cfg.port));
  m.server_thread = std::thread([&m] { m.server.listen_after_bind(); });
  m.server.wait_until_ready();
  return m.bound_port;
}

void Service::run() {
  Impl& m = *impl_;
  if (!m.server.listen(m.cfg.host, m.cfg.port))
    fail(ErrorKind::kIo, "cannot listen on " + m.cfg.host + ":" + std::to_string(m.cfg.port));
}

void Service::stop() {
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace biasner
