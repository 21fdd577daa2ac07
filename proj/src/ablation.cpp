#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/eval.hpp"

namespace biasner {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "Full";
    case Variant::kNoAttn: return "NoAttn";
    case Variant::kStaticEmb: return "StaticEmb";
    case Variant::kHalfDepth: return "HalfDepth";
    case Variant::kRandInit: return "RandInit";
  }
  return "Full";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kFull, Variant::kNoAttn, Variant::kStaticEmb, Variant::kHalfDepth, Variant::kRandInit})
    if (name == variant_name(v)) return v;
  fail(ErrorKind::kConfig, "unknown ablation variant '" + std::string(name) +
                               "' (expected Full, NoAttn, StaticEmb, HalfDepth or RandInit)");
}

ModelConfig variant_config(const ModelConfig& base, Variant v) {
  ModelConfig c = base;
  switch (v) {
    case Variant::kFull: break;
    case Variant::kNoAttn: c.ablation.use_attention = false; break;
    case Variant::kStaticEmb: c.ablation.embedding_source = EmbeddingSource::kExternalStatic; break;
    case Variant::kHalfDepth: c.n_layers = (base.n_layers + 1) / 2; break;
    case Variant::kRandInit:
      c.ablation.init = InitMode::kRandom;
      c.ablation.warm_checkpoint.clear();
      break;
  }
  return c;
}

Stat mean_stdev(std::span<const double> xs) {
  Stat s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

Prf evaluate_examples(const ModelParams& params, std::span<const Example> examples) {
  size_t tp = 0, fp = 0, fn = 0;
  for (const auto& ex : examples) {
    if (ex.ids.empty()) continue;
    const auto preds = classify_tokens(encode_seq(ex.ids, params), params);
    for (size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i].tag == Tag::kBias;
      const bool g = ex.bias[i] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  return prf_from_counts(tp, fp, fn);
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, std::span<const Variant> variants,
                                      const AblationInputs& data, const Hyper& hyper,
                                      std::span<const uint64_t> seeds) {
  require(!seeds.empty(), "ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    const ModelConfig cfg = variant_config(base, v);
    std::vector<double> p, r, f;
    for (uint64_t seed : seeds) {
      ModelParams params = init_model(cfg, seed);
      if (v == Variant::kStaticEmb && !data.static_embeddings.empty()) {
        require(data.vocab != nullptr, "static embeddings need the vocabulary");
        load_static_embeddings(params, *data.vocab, data.static_embeddings);
      }
      Hyper h = hyper;
      h.seed = seed;
      train(params, data.train, data.dev, h);
      const Prf m = evaluate_examples(params, data.test);
      row.runs.push_back(m);
      p.push_back(m.precision);
      r.push_back(m.recall);
      f.push_back(m.f1);
    }
    row.precision = mean_stdev(p);
    row.recall = mean_stdev(r);
    row.f1 = mean_stdev(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_json(std::span<const AblationRow> rows) {
  nlohmann::json a = nlohmann::json::array();
  auto stat = [](const Stat& s) { return nlohmann::json{{"mean", s.mean}, {"stdev", s.stdev}}; };
  for (const auto& row : rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& m : row.runs) runs.push_back({{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}});
    a.push_back({{"variant", variant_name(row.variant)},
                 {"precision", stat(row.precision)},
                 {"recall", stat(row.recall)},
                 {"f1", stat(row.f1)},
                 {"runs", runs}});
  }
  return nlohmann::json{{"variants", a}}.dump(2) + "\n";
}

std::string ablation_text(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "variant      precision (%)    recall (%)       f1 (%)\n";
  for (const auto& row : rows) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %6.1f +- %-5.1f %6.1f +- %-5.1f %6.1f +- %-5.1f\n",
                  std::string(variant_name(row.variant)).c_str(), 100 * row.precision.mean,
                  100 * row.precision.stdev, 100 * row.recall.mean, 100 * row.recall.stdev, 100 * row.f1.mean,
                  100 * row.f1.stdev);
    out << buf;
  }
  return out.str();
}

}  // namespace biasner
