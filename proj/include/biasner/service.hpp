#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biasner/bootstrap.hpp"
#include "biasner/model.hpp"

namespace biasner {

// ---------------------------------------------------------------------------
// Workspace persistence
//
// <dir>/CURRENT names the live snapshot; <dir>/snapshots/<n>/ holds
//   manifest.json            byte length and FNV-1a of every other file
//   state.json               full loop state
//   audit.jsonl              one audit entry per line
//   {gold,proposed,raw}.conll and .ids   pools as CoNLL plus sentence ids
//   corpora.json, model.bin, model.vocab, metrics.json   when present
// A snapshot is complete before CURRENT is swapped to it, so an interrupted
// write leaves the previous snapshot live.

struct Session {
  std::vector<std::pair<std::string, std::vector<Record>>> corpora;  // id -> records
  std::optional<LoopState> loop;
  std::optional<ModelParams> model;
  std::optional<Vocab> vocab;
  std::string metrics_json;  // latest EvalReport, empty when none

  bool operator==(const Session&) const = default;
};

struct PersistOptions {
  // Fault injection: throw kIo before writing the n-th file (0-based).
  size_t fail_after_files = SIZE_MAX;
};

void persist(const std::string& dir, const Session& session, const PersistOptions& options = {});
// A directory without CURRENT restores to an empty session. Checksum or
// cross-file mismatches throw kLoad naming the file.
Session restore(const std::string& dir);

// ---------------------------------------------------------------------------
// HTTP service

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds an ephemeral port
  std::string workspace = "workspace";
  ModelConfig model;  // vocab_size comes from the corpus
  Hyper hyper;
  uint64_t init_seed = 5;
  double lease_seconds = 300.0;
  std::string request_log;  // JSONL; defaults to <workspace>/requests.jsonl

  // Keys: host, port, workspace, init_seed, lease_seconds, request_log,
  // model {d_model, n_layers, n_heads, d_k, d_ff, max_len, dropout_rate,
  // activation}, hyper {epochs, batch_size, optimizer, learning_rate,
  // weight_decay, momentum, seed}. Unknown keys throw kConfig.
  static ServiceConfig from_json(std::string_view text);
  // Reads `path` when non-empty, then applies BIASNER_PORT and
  // BIASNER_WORKSPACE.
  static ServiceConfig load(const std::string& path);
  void apply_env();
};

class Service {
 public:
  // Restores the workspace (created when missing).
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start();
  // Blocks serving on the calling thread.
  void run();
  void stop();

  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace biasner
