#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "biasner/conll.hpp"
#include "biasner/error.hpp"
#include "biasner/service.hpp"

namespace biasner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestFormat = 1;

json record_json(const Record& r) {
  return {{"Dataset", r.dataset},
          {"Text", r.text},
          {"BiasedWords", r.biased_words},
          {"AspectOfBias", r.aspect_of_bias},
          {"Label", label_name(r.label)}};
}

Record record_from(const json& j) {
  Record r;
  r.dataset = j.at("Dataset").get<std::string>();
  r.text = j.at("Text").get<std::string>();
  r.biased_words = j.at("BiasedWords").get<std::vector<std::string>>();
  r.aspect_of_bias = j.at("AspectOfBias").get<std::string>();
  const auto label = parse_label(j.at("Label").get<std::string>());
  if (!label) fail(ErrorKind::kLoad, "corpora.json: bad label");
  r.label = *label;
  return r;
}

struct PoolExport {
  std::vector<TaggedSentence> sentences;
  std::string ids;
};

void add_to(PoolExport& p, size_t id, const TaggedSentence& s) {
  if (s.tokens.empty()) return;
  p.sentences.push_back(s);
  p.ids += std::to_string(id) + "\n";
}

class SnapshotWriter {
 public:
  SnapshotWriter(fs::path dir, const PersistOptions& options) : dir_(std::move(dir)), options_(options) {}

  void write(const std::string& name, std::string_view content, json* manifest) {
    tick();
    write_file_atomic((dir_ / name).string(), content);
    if (manifest)
      (*manifest)["files"][name] = {{"bytes", content.size()}, {"fnv1a64", fnv1a64(content)}};
  }

  void tick() {
    if (written_ == options_.fail_after_files)
      fail(ErrorKind::kIo, "injected fault before file " + std::to_string(written_));
    ++written_;
  }

 private:
  fs::path dir_;
  PersistOptions options_;
  size_t written_ = 0;
};

uint64_t current_snapshot(const fs::path& dir) {
  const fs::path cur = dir / "CURRENT";
  if (!fs::exists(cur)) return 0;
  std::istringstream in(read_file(cur.string()));
  uint64_t n = 0;
  if (!(in >> n) || n == 0) fail(ErrorKind::kLoad, "CURRENT in " + dir.string() + " is not a snapshot number");
  return n;
}

}  // namespace

void persist(const std::string& dir, const Session& session, const PersistOptions& options) {
  const fs::path root(dir);
  const uint64_t prev = current_snapshot(root);
  const uint64_t next = prev + 1;
  const fs::path snap = root / "snapshots" / std::to_string(next);
  std::error_code ec;
  fs::remove_all(snap, ec);
  fs::create_directories(snap, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + snap.string() + ": " + ec.message());

  SnapshotWriter w(snap, options);
  json manifest{{"format", kManifestFormat}, {"files", json::object()}};

  if (!session.corpora.empty()) {
    json c = json::array();
    for (const auto& [id, records] : session.corpora) {
      json rs = json::array();
      for (const auto& r : records) rs.push_back(record_json(r));
      c.push_back({{"id", id}, {"records", rs}});
    }
    w.write("corpora.json", c.dump(), &manifest);
  }
  if (session.loop) {
    const LoopState& s = *session.loop;
    w.write("state.json", loop_state_to_json(s), &manifest);
    std::string audit;
    for (const auto& e : s.audit) audit += audit_entry_to_json(e) + "\n";
    w.write("audit.jsonl", audit, &manifest);

    PoolExport gold, proposed, raw;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s.pool[i] == Pool::kGold) add_to(gold, i, *s.gold[i]);
      if (s.pool[i] == Pool::kRaw) add_to(raw, i, s.sentences[i]);
    }
    for (const auto& it : s.items)
      if (it.status == ItemStatus::kPending) add_to(proposed, it.sentence, it.proposed);
    for (auto& [name, p] : {std::pair<const char*, PoolExport*>{"gold", &gold}, {"proposed", &proposed}, {"raw", &raw}}) {
      w.write(std::string(name) + ".conll", emit_conll(p->sentences), &manifest);
      w.write(std::string(name) + ".ids", p->ids, &manifest);
    }
    manifest["pools"] = {{"raw", s.count(Pool::kRaw)},
                         {"proposed", s.count(Pool::kProposed)},
                         {"gold", s.count(Pool::kGold)}};
    manifest["audit_length"] = s.audit.size();
  }
  if (session.model) {
    w.write("model.bin", serialize_model(*session.model), &manifest);
    manifest["model_checksum"] = model_checksum(*session.model);
  }
  if (session.vocab) w.write("model.vocab", session.vocab->serialize(), &manifest);
  if (!session.metrics_json.empty()) w.write("metrics.json", session.metrics_json, &manifest);

  w.write("manifest.json", manifest.dump(2) + "\n", nullptr);
  w.tick();
  write_file_atomic((root / "CURRENT").string(), std::to_string(next) + "\n");

  // Keep the previous snapshot as a fallback, drop older ones.
  for (const auto& entry : fs::directory_iterator(root / "snapshots", ec)) {
    const std::string name = entry.path().filename().string();
    uint64_t n = 0;
    try {
      n = std::stoull(name);
    } catch (...) {
      continue;
    }
    if (n + 1 < next) fs::remove_all(entry.path(), ec);
  }
}

Session restore(const std::string& dir) {
  const fs::path root(dir);
  Session session;
  const uint64_t cur = current_snapshot(root);
  if (cur == 0) return session;
  const fs::path snap = root / "snapshots" / std::to_string(cur);

  json manifest;
  try {
    manifest = json::parse(read_file((snap / "manifest.json").string()));
  } catch (const json::exception& ex) {
    fail(ErrorKind::kLoad, "manifest.json: " + std::string(ex.what()));
  } catch (const Error& ex) {
    fail(ErrorKind::kLoad, ex.what());
  }
  if (manifest.value("format", 0) != kManifestFormat)
    fail(ErrorKind::kLoad, "manifest.json: unsupported format");

  std::map<std::string, std::string> files;
  for (const auto& [name, info] : manifest.at("files").items()) {
    std::string content;
    try {
      content = read_file((snap / name).string());
    } catch (const Error&) {
      fail(ErrorKind::kLoad, name + ": listed in the manifest but missing");
    }
    if (content.size() != info.at("bytes").get<size_t>() || fnv1a64(content) != info.at("fnv1a64").get<uint64_t>())
      fail(ErrorKind::kLoad, name + ": checksum mismatch, refusing to restore");
    files[name] = std::move(content);
  }

  try {
    if (files.count("corpora.json")) {
      for (const auto& c : json::parse(files["corpora.json"])) {
        std::vector<Record> records;
        for (const auto& r : c.at("records")) records.push_back(record_from(r));
        session.corpora.emplace_back(c.at("id").get<std::string>(), std::move(records));
      }
    }
  } catch (const json::exception& ex) {
    fail(ErrorKind::kLoad, "corpora.json: " + std::string(ex.what()));
  }

  if (files.count("state.json")) {
    LoopState s = loop_state_from_json(files["state.json"]);
    std::vector<AuditEntry> audit;
    std::istringstream in(files["audit.jsonl"]);
    for (std::string line; std::getline(in, line);)
      if (!line.empty()) audit.push_back(audit_entry_from_json(line));
    if (audit != s.audit) fail(ErrorKind::kLoad, "audit.jsonl disagrees with state.json");
    session.loop = std::move(s);
  }
  if (files.count("model.bin")) {
    session.model = deserialize_model(files["model.bin"]);
    if (manifest.contains("model_checksum") &&
        manifest["model_checksum"].get<uint64_t>() != model_checksum(*session.model))
      fail(ErrorKind::kLoad, "model.bin: checksum differs from the manifest");
  }
  if (files.count("model.vocab")) session.vocab = Vocab::deserialize(files["model.vocab"]);
  if (files.count("metrics.json")) session.metrics_json = files["metrics.json"];
  return session;
}

}  // namespace biasner
