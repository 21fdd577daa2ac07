#include <atomic>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "biasner/agreement.hpp"
#include "biasner/bootstrap.hpp"
#include "biasner/conll.hpp"
#include "biasner/error.hpp"
#include "biasner/eval.hpp"
#include "biasner/ingest.hpp"
#include "biasner/kernels.hpp"
#include "biasner/lexicon.hpp"
#include "biasner/service.hpp"
#include "biasner/synthetic.hpp"

using namespace biasner;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 3;
    case ErrorKind::kIngest:
    case ErrorKind::kIo: return 4;
    case ErrorKind::kParse: return 5;
    case ErrorKind::kContract:
    case ErrorKind::kValidation:
    case ErrorKind::kSplit:
    case ErrorKind::kState: return 6;
    case ErrorKind::kLoad: return 7;
    case ErrorKind::kNumeric: return 8;
  }
  return 1;
}

std::string extension(const std::string& path) { return ascii_lower(fs::path(path).extension().string()); }

std::vector<Record> load_records(const std::string& path, const ColumnMap& map = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  const std::string ext = extension(path);
  IngestResult r;
  if (ext == ".csv") r = ingest_delimited(in, ',', map);
  else if (ext == ".tsv") r = ingest_delimited(in, '\t', map);
  else r = ingest_jsonl(in, map);
  return std::move(r.records);
}

// Gold sentences from CoNLL, or from records whose biased words are matched
// back onto their text.
std::vector<TaggedSentence> load_sentences(const std::string& path) {
  if (extension(path) == ".conll" || extension(path) == ".txt") return parse_conll(read_file(path));
  std::vector<TaggedSentence> out;
  for (const auto& r : load_records(path)) out.push_back(annotate_record(r));
  return out;
}

Lexicon load_lexicon(const std::string& path) { return path.empty() ? Lexicon::starter() : Lexicon::from_json(read_file(path)); }

void write_output(const std::string& path, std::string_view content) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file_atomic(path, content);
  }
}

ModelConfig load_model_config(const std::string& path) {
  return path.empty() ? ModelConfig{} : ModelConfig::from_json(read_file(path));
}

Hyper make_hyper(size_t epochs, double lr, const std::string& optimizer, size_t batch, uint64_t seed) {
  Hyper h;
  h.epochs = epochs;
  h.learning_rate = lr;
  h.batch_size = batch;
  h.seed = seed;
  if (optimizer == "sgd") {
    h.optimizer = Optimizer::kSgdMomentum;
  } else if (optimizer != "adamw") {
    fail(ErrorKind::kConfig, "unknown optimizer '" + optimizer + "' (expected adamw or sgd)");
  }
  return h;
}

Vocab vocab_of(std::span<const TaggedSentence> sentences) {
  std::vector<std::vector<Token>> toks;
  for (const auto& s : sentences) toks.push_back(s.tokens);
  return build_vocab(toks);
}

std::string vocab_path(const std::string& model_path) { return model_path + ".vocab"; }

// Reproducible ISO-8601 timestamps: one second per call from the epoch.
Clock logical_clock() {
  auto counter = std::make_shared<std::time_t>(0);
  return [counter] {
    std::tm tm{};
    const std::time_t t = (*counter)++;
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
  };
}

std::vector<std::string> read_labels(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Common {
  uint64_t seed = 1;
  bool json_out = false;
};

void add_common(CLI::App* cmd, Common& c, bool report = true) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  if (report) cmd->add_flag("--json", c.json_out, "Machine-readable JSON output");
}

std::atomic<Service*> g_service{nullptr};

void on_signal(int) {
  if (Service* s = g_service.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biasner: bias span detection, annotation bootstrapping and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "biasner 1.0.0");

  // ingest ------------------------------------------------------------------
  struct {
    std::vector<std::string> in;
    std::string out, columns;
    Common c;
  } ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Consolidate JSONL/CSV/TSV sources into one JSONL corpus");
  ingest_cmd->add_option("--in", ingest.in, "Input files (format from extension)")->required();
  ingest_cmd->add_option("--out", ingest.out, "Output JSONL corpus (- for stdout)")->required();
  ingest_cmd->add_option("--columns", ingest.columns, "Column map JSON file");
  add_common(ingest_cmd, ingest.c);

  // annotate ----------------------------------------------------------------
  struct {
    std::string in, out, lexicon;
    bool from_records = false;
    Common c;
  } annotate;
  auto* annotate_cmd = app.add_subcommand("annotate", "Lexicon pass over a corpus, written as CoNLL");
  annotate_cmd->add_option("--in", annotate.in, "Corpus (JSONL/CSV/TSV)")->required();
  annotate_cmd->add_option("--out", annotate.out, "Output CoNLL (- for stdout)")->required();
  annotate_cmd->add_option("--lexicon", annotate.lexicon, "Lexicon JSON (default: bundled starter lexicon)");
  annotate_cmd->add_flag("--from-records", annotate.from_records, "Tag each record's own biased words instead");
  add_common(annotate_cmd, annotate.c, false);

  // split -------------------------------------------------------------------
  struct {
    std::string in, out_dir;
    double train = 0.8, dev = 0.1, test = 0.1;
    Common c;
  } split;
  auto* split_cmd = app.add_subcommand("split", "Label-stratified train/dev/test split");
  split_cmd->add_option("--in", split.in, "Corpus")->required();
  split_cmd->add_option("--out-dir", split.out_dir, "Directory for train/dev/test.jsonl")->required();
  split_cmd->add_option("--train", split.train, "Train fraction")->capture_default_str();
  split_cmd->add_option("--dev", split.dev, "Dev fraction")->capture_default_str();
  split_cmd->add_option("--test", split.test, "Test fraction")->capture_default_str();
  add_common(split_cmd, split.c);

  // train -------------------------------------------------------------------
  struct {
    std::string train, dev, out, config, optimizer = "adamw", variant = "Full", static_embeddings;
    size_t epochs = 5, batch = 16;
    double lr = 3e-4;
    uint64_t init_seed = 5;
    Common c;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train the token classifier");
  train_cmd->add_option("--train", tr.train, "Training data (CoNLL or corpus)")->required();
  train_cmd->add_option("--dev", tr.dev, "Dev data for early stopping");
  train_cmd->add_option("--out", tr.out, "Checkpoint path; the vocabulary goes to <out>.vocab")->required();
  train_cmd->add_option("--config", tr.config, "Model config JSON");
  train_cmd->add_option("--variant", tr.variant, "Full, NoAttn, StaticEmb, HalfDepth or RandInit")->capture_default_str();
  train_cmd->add_option("--static-embeddings", tr.static_embeddings, "GloVe text vectors for StaticEmb");
  train_cmd->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer, "adamw or sgd")->capture_default_str();
  train_cmd->add_option("--init-seed", tr.init_seed, "Parameter init seed")->capture_default_str();
  add_common(train_cmd, tr.c);

  // predict -----------------------------------------------------------------
  struct {
    std::string model, in, text, out;
    Common c;
  } pr;
  auto* predict_cmd = app.add_subcommand("predict", "Tag sentences with a trained model");
  predict_cmd->add_option("--model", pr.model, "Checkpoint")->required();
  predict_cmd->add_option("--in", pr.in, "One sentence per line");
  predict_cmd->add_option("--text", pr.text, "A single sentence");
  predict_cmd->add_option("--out", pr.out, "Output file (CoNLL, or JSON with --json)");
  add_common(predict_cmd, pr.c);

  // bootstrap ---------------------------------------------------------------
  auto* boot_cmd = app.add_subcommand("bootstrap", "Semi-autonomous labeling loop");
  boot_cmd->require_subcommand(1);
  struct {
    std::string corpus, lexicon, workspace, config, reference;
    double increment = 0.2, tau = 0.9, lr = 3e-4;
    size_t max_increments = SIZE_MAX, epochs = 5;
    bool fine_tune = false;
    std::vector<std::string> reviewers;
    uint64_t init_seed = 5;
    Common c;
  } bs;
  auto* run_cmd = boot_cmd->add_subcommand("run", "Headless loop with an automatic resolver");
  run_cmd->add_option("--corpus", bs.corpus, "Corpus (JSONL/CSV/TSV)")->required();
  run_cmd->add_option("--lexicon", bs.lexicon, "Seed lexicon JSON (default: bundled starter lexicon)");
  run_cmd->add_option("--workspace", bs.workspace, "Directory the loop state is persisted to")->required();
  run_cmd->add_option("--config", bs.config, "Model config JSON");
  run_cmd->add_option("--increment-size", bs.increment, "Fraction of the corpus per increment")->capture_default_str();
  run_cmd->add_option("--max-increments", bs.max_increments, "Stop after this many increments");
  run_cmd->add_option("--tau", bs.tau, "Auto-accept threshold on p_bias")->capture_default_str();
  run_cmd->add_option("--reference", bs.reference,
                      "Reference labels (CoNLL or corpus, one per record): resolve as a simulated expert");
  run_cmd->add_option("--reviewers", bs.reviewers, "Reviewer ids; two or more enable consensus mode");
  run_cmd->add_flag("--fine-tune", bs.fine_tune, "Continue from the previous model instead of retraining");
  run_cmd->add_option("--epochs", bs.epochs, "Epochs per training round")->capture_default_str();
  run_cmd->add_option("--lr", bs.lr, "Learning rate")->capture_default_str();
  run_cmd->add_option("--init-seed", bs.init_seed, "Parameter init seed")->capture_default_str();
  add_common(run_cmd, bs.c);
  struct {
    std::string workspace;
    Common c;
  } bv;
  auto* verify_cmd = boot_cmd->add_subcommand("verify", "Replay a workspace's audit log and compare states");
  verify_cmd->add_option("--workspace", bv.workspace, "Workspace directory")->required();
  add_common(verify_cmd, bv.c);

  // eval --------------------------------------------------------------------
  struct {
    std::string pred, gold, model, roc_csv;
    Common c;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "P/R/F1, accuracy, AUC and per-type confusion");
  eval_cmd->add_option("--gold", ev.gold, "Gold labels (CoNLL or corpus)")->required();
  eval_cmd->add_option("--pred", ev.pred, "Predicted CoNLL (no scores, so no AUC)");
  eval_cmd->add_option("--model", ev.model, "Checkpoint to predict with");
  eval_cmd->add_option("--roc-csv", ev.roc_csv, "Write the ROC curve here");
  add_common(eval_cmd, ev.c);

  // robustness --------------------------------------------------------------
  struct {
    std::string model, in;
    std::vector<std::string> kinds;
    Common c;
  } rb;
  auto* rob_cmd = app.add_subcommand("robustness", "Perturbation harness");
  rob_cmd->add_option("--model", rb.model, "Checkpoint")->required();
  rob_cmd->add_option("--in", rb.in, "Labeled sentences to perturb (default: the five worked cases)");
  rob_cmd->add_option("--kinds", rb.kinds, "spelling, semantics, case, context (default: all)");
  add_common(rob_cmd, rb.c);

  // perpetuation ------------------------------------------------------------
  struct {
    std::string model, templ = "The [Phrase] was mentioned in the report.", phrases;
    size_t trials = 30;
    Common c;
  } pp;
  auto* perp_cmd = app.add_subcommand("perpetuation", "Template audit of demographic phrases");
  perp_cmd->add_option("--model", pp.model, "Checkpoint")->required();
  perp_cmd->add_option("--phrases", pp.phrases, "JSON list of {phrase, group}")->required();
  perp_cmd->add_option("--template", pp.templ, "Template with one [Phrase] slot")->capture_default_str();
  perp_cmd->add_option("--trials", pp.trials, "Trials per phrase")->capture_default_str();
  add_common(perp_cmd, pp.c);

  // ablate ------------------------------------------------------------------
  struct {
    std::string train, dev, test, config, static_embeddings;
    std::vector<std::string> variants{"Full", "NoAttn", "StaticEmb", "HalfDepth", "RandInit"};
    std::vector<uint64_t> seeds{1, 2, 3};
    size_t epochs = 5;
    double lr = 3e-4;
    Common c;
  } ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train each variant over several seeds");
  ablate_cmd->add_option("--train", ab.train, "Training data")->required();
  ablate_cmd->add_option("--dev", ab.dev, "Dev data");
  ablate_cmd->add_option("--test", ab.test, "Test data")->required();
  ablate_cmd->add_option("--config", ab.config, "Base model config JSON");
  ablate_cmd->add_option("--variants", ab.variants, "Variants to run")->capture_default_str();
  ablate_cmd->add_option("--seeds", ab.seeds, "Seeds per variant")->capture_default_str();
  ablate_cmd->add_option("--epochs", ab.epochs, "Epochs")->capture_default_str();
  ablate_cmd->add_option("--lr", ab.lr, "Learning rate")->capture_default_str();
  ablate_cmd->add_option("--static-embeddings", ab.static_embeddings, "GloVe text vectors for StaticEmb");
  add_common(ablate_cmd, ab.c);

  // export-conll ------------------------------------------------------------
  struct {
    std::string workspace, pool = "gold", out;
    Common c;
  } ex;
  auto* export_cmd = app.add_subcommand("export-conll", "Write a workspace pool as CoNLL");
  export_cmd->add_option("--workspace", ex.workspace, "Workspace directory")->required();
  export_cmd->add_option("--pool", ex.pool, "gold, proposed or raw")->capture_default_str();
  export_cmd->add_option("--out", ex.out, "Output file (- for stdout)")->capture_default_str();
  add_common(export_cmd, ex.c, false);

  // kappa -------------------------------------------------------------------
  struct {
    std::string a, b;
    Common c;
  } kp;
  auto* kappa_cmd = app.add_subcommand("kappa", "Cohen's kappa of two whitespace-separated label files");
  kappa_cmd->add_option("a", kp.a, "First annotator's labels")->required();
  kappa_cmd->add_option("b", kp.b, "Second annotator's labels")->required();
  add_common(kappa_cmd, kp.c);

  // serve -------------------------------------------------------------------
  struct {
    std::string config, workspace;
    int port = -1;
    Common c;
  } sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP review service");
  serve_cmd->add_option("--config", sv.config, "Service config JSON");
  serve_cmd->add_option("--port", sv.port, "Port (overrides config and BIASNER_PORT)");
  serve_cmd->add_option("--workspace", sv.workspace, "Workspace (overrides config and BIASNER_WORKSPACE)");
  add_common(serve_cmd, sv.c, false);

  // synth -------------------------------------------------------------------
  struct {
    std::string out, gold_out, lexicon_out;
    size_t sentences = 2000;
    Common c;
  } sy;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a corpus with lexicon-planted bias spans");
  synth_cmd->add_option("--out", sy.out, "Output JSONL corpus")->required();
  synth_cmd->add_option("--gold-out", sy.gold_out, "Gold CoNLL");
  synth_cmd->add_option("--lexicon-out", sy.lexicon_out, "Planted lexicon JSON");
  synth_cmd->add_option("--sentences", sy.sentences, "Number of sentences")->capture_default_str();
  add_common(synth_cmd, sy.c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest_cmd) {
      const ColumnMap map = ingest.columns.empty() ? ColumnMap{} : column_map_from_json(read_file(ingest.columns));
      std::vector<Record> all;
      json per_file = json::array();
      for (const auto& path : ingest.in) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::kIo, "cannot open " + path);
        const std::string ext = extension(path);
        IngestResult r = ext == ".csv"   ? ingest_delimited(in, ',', map)
                         : ext == ".tsv" ? ingest_delimited(in, '\t', map)
                                         : ingest_jsonl(in, map);
        per_file.push_back({{"file", path},
                            {"rows_read", r.rows_read},
                            {"records", r.records.size()},
                            {"dropped_empty", r.dropped_empty},
                            {"inconsistent", r.inconsistent}});
        all.insert(all.end(), r.records.begin(), r.records.end());
      }
      write_output(ingest.out, records_to_jsonl(all));
      if (ingest.out != "-") {
        if (ingest.c.json_out) {
          std::cout << json{{"records", all.size()}, {"files", per_file}}.dump(2) << "\n";
        } else {
          for (const auto& f : per_file)
            std::cout << f["file"].get<std::string>() << ": " << f["records"] << " records (" << f["dropped_empty"]
                      << " empty dropped, " << f["inconsistent"] << " label conflicts)\n";
          std::cout << "total: " << all.size() << " records\n";
        }
      }
    } else if (*annotate_cmd) {
      const auto records = load_records(annotate.in);
      const Lexicon lexicon = load_lexicon(annotate.lexicon);
      std::vector<TaggedSentence> out;
      for (const auto& r : records)
        out.push_back(annotate.from_records ? annotate_record(r) : lexicon_annotate(r.text, lexicon));
      write_output(annotate.out, emit_conll(out));
    } else if (*split_cmd) {
      const auto records = load_records(split.in);
      const CorpusSplit s = split_corpus(records, {split.train, split.dev, split.test}, split.c.seed);
      fs::create_directories(split.out_dir);
      write_file_atomic((fs::path(split.out_dir) / "train.jsonl").string(), records_to_jsonl(s.train));
      write_file_atomic((fs::path(split.out_dir) / "dev.jsonl").string(), records_to_jsonl(s.dev));
      write_file_atomic((fs::path(split.out_dir) / "test.jsonl").string(), records_to_jsonl(s.test));
      if (split.c.json_out)
        std::cout << json{{"seed", split.c.seed}, {"train", s.train.size()}, {"dev", s.dev.size()}, {"test", s.test.size()}}
                         .dump(2)
                  << "\n";
      else
        std::cout << "seed " << split.c.seed << ": train " << s.train.size() << ", dev " << s.dev.size() << ", test "
                  << s.test.size() << "\n";
    } else if (*train_cmd) {
      const auto train_set = load_sentences(tr.train);
      const auto dev_set = tr.dev.empty() ? std::vector<TaggedSentence>{} : load_sentences(tr.dev);
      const Vocab vocab = vocab_of(train_set);
      ModelConfig cfg = variant_config(load_model_config(tr.config), parse_variant(tr.variant));
      cfg.vocab_size = vocab.size();
      ModelParams params = init_model(cfg, tr.init_seed);
      if (!tr.static_embeddings.empty()) load_static_embeddings(params, vocab, tr.static_embeddings);
      const auto tex = make_examples(train_set, vocab, cfg.max_len);
      const auto dex = make_examples(dev_set, vocab, cfg.max_len);
      const Hyper h = make_hyper(tr.epochs, tr.lr, tr.optimizer, tr.batch, tr.c.seed);
      const TrainReport report = train(params, tex, dex, h, [&](const EpochStats& e) {
        if (!tr.c.json_out)
          std::cout << "epoch " << e.epoch << " train_loss " << fixed(e.train_loss, 6) << " dev_loss "
                    << fixed(e.dev_loss, 6) << " dev_f1 " << fixed(e.dev_f1, 4) << "\n";
      });
      save_model(params, tr.out);
      save_vocab(vocab, vocab_path(tr.out));
      if (tr.c.json_out) {
        json epochs = json::array();
        for (const auto& e : report.epochs)
          epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}, {"dev_f1", e.dev_f1}});
        std::cout << json{{"seed", tr.c.seed},
                          {"epochs", epochs},
                          {"stopped_early", report.stopped_early},
                          {"best_epoch", report.best_epoch},
                          {"model_checksum", model_checksum(params)}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << "seed " << tr.c.seed << ", isa " << kernels::isa_name(kernels::active().isa) << ", "
                  << report.epochs_run << " epochs" << (report.stopped_early ? " (stopped early)" : "")
                  << ", checksum " << model_checksum(params) << "\n";
      }
    } else if (*predict_cmd) {
      if (pr.in.empty() == pr.text.empty()) fail(ErrorKind::kConfig, "give exactly one of --in and --text");
      const ModelParams params = load_model(pr.model);
      const Vocab vocab = load_vocab(vocab_path(pr.model));
      std::vector<std::string> lines;
      if (!pr.text.empty()) {
        lines.push_back(pr.text);
      } else {
        std::istringstream in(read_file(pr.in));
        for (std::string l; std::getline(in, l);)
          if (!l.empty()) lines.push_back(l);
      }
      std::vector<TaggedSentence> out;
      json j = json::array();
      for (const auto& l : lines) {
        const LabeledText lt = label_sequence(l, params, vocab);
        json toks = json::array();
        for (size_t k = 0; k < lt.sentence.size(); ++k)
          toks.push_back({{"token", lt.sentence.tokens[k].surface},
                          {"tag", tag_name(lt.sentence.tags[k])},
                          {"p_bias", lt.predictions[k].p_bias}});
        j.push_back({{"text", l}, {"tokens", toks}});
        out.push_back(lt.sentence);
      }
      write_output(pr.out, pr.c.json_out ? j.dump(2) + "\n" : emit_conll(out));
    } else if (*run_cmd) {
      auto records = load_records(bs.corpus);
      LoopConfig lc;
      lc.increment_size = bs.increment;
      lc.seed = bs.c.seed;
      lc.reviewers = bs.reviewers;
      lc.fine_tune = bs.fine_tune;
      LoopState state = make_loop(records, lc);
      Resolver resolver = auto_accept_resolver(bs.tau);
      if (!bs.reference.empty()) {
        auto ref = load_sentences(bs.reference);
        if (ref.size() != state.size())
          fail(ErrorKind::kContract, "reference has " + std::to_string(ref.size()) + " sentences, corpus has " +
                                         std::to_string(state.size()));
        resolver = reference_resolver(std::move(ref));
      }
      LoopRunConfig run;
      run.model = load_model_config(bs.config);
      run.hyper = make_hyper(bs.epochs, bs.lr, "adamw", 16, bs.c.seed);
      run.init_seed = bs.init_seed;
      run.max_increments = bs.max_increments;
      const LoopRunResult result = run_loop(state, load_lexicon(bs.lexicon), resolver, run, logical_clock());
      Session session;
      session.corpora.emplace_back("c1", records);
      session.model = result.model;
      session.vocab = result.vocab;
      session.loop = std::move(state);
      persist(bs.workspace, session);
      const LoopState& s = *session.loop;
      if (bs.c.json_out) {
        json incs = json::array();
        for (const auto& inc : s.increments)
          incs.push_back({{"increment", inc.increment},
                          {"items", inc.items},
                          {"source", provenance_name(inc.source)},
                          {"kappa", inc.agreement ? json(inc.agreement->kappa) : json(nullptr)}});
        std::cout << json{{"seed", bs.c.seed},
                          {"increments", incs},
                          {"gold", s.count(Pool::kGold)},
                          {"size", s.size()},
                          {"audit_length", s.audit.size()},
                          {"model_checksum", s.model_checksum}}
                         .dump(2)
                  << "\n";
      } else {
        std::cout << "seed " << bs.c.seed << "\n";
        for (const auto& inc : s.increments)
          std::cout << "increment " << inc.increment << ": " << inc.items << " items (" << provenance_name(inc.source)
                    << "), kappa " << (inc.agreement ? fixed(inc.agreement->kappa, 4) : std::string("n/a")) << "\n";
        std::cout << "gold " << s.count(Pool::kGold) << "/" << s.size() << ", audit entries " << s.audit.size()
                  << "\n";
      }
    } else if (*verify_cmd) {
      const Session session = restore(bv.workspace);
      if (!session.loop) fail(ErrorKind::kLoad, "workspace has no loop state");
      const LoopState& s = *session.loop;
      const LoopState r = replay(s.records, s.config, s.audit);
      const bool same = r == s;
      if (bv.c.json_out)
        std::cout << json{{"replay_identical", same}, {"audit_length", s.audit.size()}}.dump(2) << "\n";
      else
        std::cout << (same ? "replay identical" : "replay differs") << " (" << s.audit.size() << " audit entries)\n";
      if (!same) return exit_code(ErrorKind::kState);
    } else if (*eval_cmd) {
      if (ev.pred.empty() == ev.model.empty()) fail(ErrorKind::kConfig, "give exactly one of --pred and --model");
      const auto gold = load_sentences(ev.gold);
      std::vector<std::string> types;
      if (extension(ev.gold) != ".conll")
        for (const auto& r : load_records(ev.gold)) types.push_back(r.aspect_of_bias);
      Predicted pred;
      if (!ev.model.empty()) {
        pred = predict_corpus(load_model(ev.model), load_vocab(vocab_path(ev.model)), gold);
      } else {
        pred.sentences = parse_conll(read_file(ev.pred));
        if (pred.sentences.size() != gold.size())
          fail(ErrorKind::kContract, "prediction has " + std::to_string(pred.sentences.size()) +
                                         " sentences, gold has " + std::to_string(gold.size()));
      }
      const EvalReport report = evaluate(pred, gold, types);
      if (!ev.roc_csv.empty()) {
        if (!report.auc) fail(ErrorKind::kContract, "no ROC curve: scores missing or gold has one class");
        write_file_atomic(ev.roc_csv, roc_csv(report.roc));
      }
      std::cout << (ev.c.json_out ? report.to_json() : report.to_text());
    } else if (*rob_cmd) {
      const ModelParams params = load_model(rb.model);
      const Vocab vocab = load_vocab(vocab_path(rb.model));
      std::vector<RobustnessCase> cases;
      if (rb.in.empty()) {
        cases = worked_robustness_suite();
      } else {
        std::vector<PerturbKind> kinds;
        if (rb.kinds.empty()) kinds = {PerturbKind::kSpelling, PerturbKind::kSemantics, PerturbKind::kCase, PerturbKind::kContext};
        for (const auto& k : rb.kinds) {
          const auto kind = parse_perturb_kind(k);
          if (!kind) fail(ErrorKind::kConfig, "unknown perturbation kind '" + k + "'");
          kinds.push_back(*kind);
        }
        const auto sentences = load_sentences(rb.in);
        uint64_t n = 0;
        for (const auto& s : sentences) {
          const auto spans = spans_of(s.scheme == Scheme::kBio ? s : expand_tags(s));
          if (spans.empty()) continue;
          for (PerturbKind k : kinds)
            if (auto c = perturb(s.text, spans, k, PerturbResources::bundled(), rb.c.seed + n++)) cases.push_back(*c);
        }
      }
      const RobustnessReport report = run_robustness(params, vocab, std::move(cases));
      if (!rb.c.json_out) std::cout << "seed " << rb.c.seed << "\n";
      std::cout << (rb.c.json_out ? report.to_json() : report.to_text());
    } else if (*perp_cmd) {
      const ModelParams params = load_model(pp.model);
      const Vocab vocab = load_vocab(vocab_path(pp.model));
      std::vector<PhraseGroup> phrases;
      try {
        for (const auto& p : json::parse(read_file(pp.phrases)))
          phrases.push_back({p.at("phrase").get<std::string>(), p.at("group").get<std::string>()});
      } catch (const json::exception& e) {
        fail(ErrorKind::kParse, pp.phrases + ": " + e.what());
      }
      const auto results = perpetuation_test(params, vocab, pp.templ, phrases, pp.trials, pp.c.seed);
      if (pp.c.json_out) {
        std::cout << perpetuation_json(results);
      } else {
        std::cout << "seed " << pp.c.seed << "\n" << perpetuation_text(results);
      }
    } else if (*ablate_cmd) {
      const auto train_s = load_sentences(ab.train);
      const auto dev_s = ab.dev.empty() ? std::vector<TaggedSentence>{} : load_sentences(ab.dev);
      const auto test_s = load_sentences(ab.test);
      const Vocab vocab = vocab_of(train_s);
      ModelConfig base = load_model_config(ab.config);
      base.vocab_size = vocab.size();
      const auto tex = make_examples(train_s, vocab, base.max_len);
      const auto dex = make_examples(dev_s, vocab, base.max_len);
      const auto sex = make_examples(test_s, vocab, base.max_len);
      std::vector<Variant> variants;
      for (const auto& v : ab.variants) variants.push_back(parse_variant(v));
      AblationInputs in{tex, dex, sex, ab.static_embeddings, &vocab};
      const auto rows = run_ablation(base, variants, in, make_hyper(ab.epochs, ab.lr, "adamw", 16, ab.c.seed), ab.seeds);
      if (ab.c.json_out) {
        std::cout << ablation_json(rows);
      } else {
        std::cout << "seeds";
        for (auto s : ab.seeds) std::cout << " " << s;
        std::cout << "\n" << ablation_text(rows);
      }
    } else if (*export_cmd) {
      const Session session = restore(ex.workspace);
      if (!session.loop) fail(ErrorKind::kLoad, "workspace has no loop state");
      const LoopState& s = *session.loop;
      std::vector<TaggedSentence> out;
      if (ex.pool == "gold") {
        for (size_t id : gold_ids(s)) out.push_back(*s.gold[id]);
      } else if (ex.pool == "proposed") {
        for (const auto& it : s.items)
          if (it.status == ItemStatus::kPending) out.push_back(it.proposed);
      } else if (ex.pool == "raw") {
        for (size_t i = 0; i < s.size(); ++i)
          if (s.pool[i] == Pool::kRaw) out.push_back(s.sentences[i]);
      } else {
        fail(ErrorKind::kConfig, "pool must be gold, proposed or raw");
      }
      write_output(ex.out, emit_conll(out));
    } else if (*kappa_cmd) {
      const auto a = read_labels(kp.a);
      const auto b = read_labels(kp.b);
      const AgreementReport r = cohen_kappa(a, b);
      if (kp.c.json_out)
        std::cout << json{{"kappa", r.kappa},
                          {"observed_agreement", r.observed_agreement},
                          {"expected_agreement", r.expected_agreement},
                          {"n_items", r.n_items}}
                         .dump(2)
                  << "\n";
      else
        std::cout << fixed(r.kappa, 4) << "\n";
    } else if (*serve_cmd) {
      ServiceConfig cfg = ServiceConfig::load(sv.config);
      if (sv.port >= 0) cfg.port = sv.port;
      if (!sv.workspace.empty()) cfg.workspace = sv.workspace;
      Service service(cfg);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << cfg.workspace << " on " << cfg.host << ":" << cfg.port << "\n";
      service.run();
      g_service = nullptr;
    } else if (*synth_cmd) {
      SynthConfig sc;
      sc.sentences = sy.sentences;
      sc.seed = sy.c.seed;
      const SynthCorpus corpus = synthesize(sc);
      write_output(sy.out, records_to_jsonl(corpus.records));
      if (!sy.gold_out.empty()) write_file_atomic(sy.gold_out, emit_conll(corpus.gold));
      if (!sy.lexicon_out.empty()) write_file_atomic(sy.lexicon_out, corpus.lexicon.to_json());
    }
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
