#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "biasner/error.hpp"
#include "biasner/kernels.hpp"
#include "biasner/model.hpp"
#include "model_internal.hpp"

namespace biasner {

using nlohmann::json;

namespace {

constexpr double kLayerNormEps = 1e-5;

std::string_view activation_name(Activation a) { return a == Activation::kLeakyRelu ? "leaky_relu" : "relu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "leaky_relu") return Activation::kLeakyRelu;
  fail(ErrorKind::kConfig, "unknown activation '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::kConfig, "model config: " + what); };
  if (vocab_size < 2) bad("vocab_size must cover the padding and unknown ids");
  if (d_model == 0 || n_heads == 0 || d_k == 0 || d_ff == 0) bad("dimensions must be positive");
  if (d_model != n_heads * d_k)
    bad("d_model (" + std::to_string(d_model) + ") != n_heads * d_k (" + std::to_string(n_heads * d_k) + ")");
  if (max_len == 0) bad("max_len must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0, 1)");
  if (!std::isfinite(leaky_slope)) bad("leaky_slope must be finite");
  if (ablation.init == InitMode::kWarm && ablation.warm_checkpoint.empty())
    bad("warm init needs a checkpoint path");
}

std::string ModelConfig::to_json() const {
  json j;
  j["vocab_size"] = vocab_size;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["d_k"] = d_k;
  j["d_ff"] = d_ff;
  j["max_len"] = max_len;
  j["dropout_rate"] = dropout_rate;
  j["activation"] = activation_name(activation);
  j["leaky_slope"] = leaky_slope;
  j["positional_encoding"] = positional_encoding;
  j["ablation"] = {
      {"use_attention", ablation.use_attention},
      {"init", ablation.init == InitMode::kWarm ? "warm" : "random"},
      {"warm_checkpoint", ablation.warm_checkpoint},
      {"embedding_source", ablation.embedding_source == EmbeddingSource::kExternalStatic ? "external_static" : "learned"},
  };
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view json_text) {
  ModelConfig c;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) fail(ErrorKind::kConfig, "model config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "vocab_size") c.vocab_size = v.get<size_t>();
      else if (k == "d_model") c.d_model = v.get<size_t>();
      else if (k == "n_layers") c.n_layers = v.get<size_t>();
      else if (k == "n_heads") c.n_heads = v.get<size_t>();
      else if (k == "d_k") c.d_k = v.get<size_t>();
      else if (k == "d_ff") c.d_ff = v.get<size_t>();
      else if (k == "max_len") c.max_len = v.get<size_t>();
      else if (k == "dropout_rate") c.dropout_rate = v.get<double>();
      else if (k == "activation") c.activation = parse_activation(v.get<std::string>());
      else if (k == "leaky_slope") c.leaky_slope = v.get<double>();
      else if (k == "positional_encoding") c.positional_encoding = v.get<bool>();
      else if (k == "ablation") {
        for (auto a = v.begin(); a != v.end(); ++a) {
          const std::string& ak = a.key();
          if (ak == "use_attention") c.ablation.use_attention = a.value().get<bool>();
          else if (ak == "init") {
            const auto s = a.value().get<std::string>();
            if (s != "warm" && s != "random") fail(ErrorKind::kConfig, "unknown init mode '" + s + "'");
            c.ablation.init = s == "warm" ? InitMode::kWarm : InitMode::kRandom;
          } else if (ak == "warm_checkpoint") c.ablation.warm_checkpoint = a.value().get<std::string>();
          else if (ak == "embedding_source") {
            const auto s = a.value().get<std::string>();
            if (s != "learned" && s != "external_static")
              fail(ErrorKind::kConfig, "unknown embedding source '" + s + "'");
            c.ablation.embedding_source =
                s == "external_static" ? EmbeddingSource::kExternalStatic : EmbeddingSource::kLearned;
          } else {
            fail(ErrorKind::kConfig, "unknown ablation key '" + ak + "'");
          }
        }
      } else {
        fail(ErrorKind::kConfig, "unknown model config key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("model config JSON: ") + e.what());
  }
  return c;
}

std::vector<TensorInfo> make_layout(const ModelConfig& c) {
  std::vector<TensorInfo> layout;
  size_t offset = 0;
  auto add = [&](std::string name, size_t rows, size_t cols, size_t fan_in, bool decay) {
    layout.push_back({std::move(name), rows, cols, offset, fan_in, decay});
    offset += rows * cols;
  };
  const size_t d = c.d_model;
  // A lookup reads one active input, so the embedding's fan-in is 1.
  add("embedding", c.vocab_size, d, 1, true);
  for (size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (const char* proj : {"q", "k", "v", "o"}) {
      add(p + "w" + proj, d, d, d, true);
      add(p + "b" + proj, 1, d, d, false);
    }
    add(p + "ln1.gamma", 1, d, 1, false);
    add(p + "ln1.beta", 1, d, 1, false);
    add(p + "ff1.w", c.d_ff, d, d, true);
    add(p + "ff1.b", 1, c.d_ff, d, false);
    add(p + "ff2.w", d, c.d_ff, c.d_ff, true);
    add(p + "ff2.b", 1, d, c.d_ff, false);
    add(p + "ln2.gamma", 1, d, 1, false);
    add(p + "ln2.beta", 1, d, 1, false);
  }
  add("head.w", kNumClasses, d, d, true);
  add("head.b", 1, kNumClasses, d, false);
  return layout;
}

const TensorInfo& ModelParams::tensor(std::string_view name) const {
  for (const auto& t : layout)
    if (t.name == name) return t;
  fail(ErrorKind::kContract, "no tensor named '" + std::string(name) + "'");
}

std::span<double> ModelParams::view(std::string_view name) {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size()};
}

std::span<const double> ModelParams::view(std::string_view name) const {
  const auto& t = tensor(name);
  return {values.data() + t.offset, t.size()};
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, uint64_t seed) {
  config.validate();
  if (config.ablation.init == InitMode::kWarm) {
    ModelParams p = load_model(config.ablation.warm_checkpoint, config);
    p.config = config;
    return p;
  }
  ModelParams p;
  p.config = config;
  p.layout = make_layout(config);
  const auto& last = p.layout.back();
  p.values.assign(last.offset + last.size(), 0.0);

  Rng rng(seed);
  for (const auto& t : p.layout) {
    double* v = p.values.data() + t.offset;
    if (ends_with(t.name, ".gamma")) {
      std::fill(v, v + t.size(), 1.0);
    } else if (ends_with(t.name, ".beta")) {
      std::fill(v, v + t.size(), 0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.fan_in));
      for (size_t i = 0; i < t.size(); ++i) {
        // Rounding to float must not step outside the bound.
        float f = static_cast<float>(rng.uniform(-bound, bound));
        if (std::abs(static_cast<double>(f)) > bound) f = std::nextafter(f, 0.0f);
        v[i] = static_cast<double>(f);
      }
    }
  }
  return p;
}

size_t load_static_embeddings(ModelParams& params, const Vocab& vocab, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kLoad, "cannot open embedding file '" + path + "'");
  const size_t d = params.config.d_model;
  auto table = params.view("embedding");
  std::vector<char> done(vocab.size(), 0);
  size_t replaced = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> vec;
    double x;
    while (ls >> x) vec.push_back(x);
    if (vec.size() != d)
      fail(ErrorKind::kLoad, path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d) +
                                 " components, found " + std::to_string(vec.size()));
    const TokenId id = vocab.id_of(ascii_lower(word));
    if (id == Vocab::kUnk || id == Vocab::kPad || done[static_cast<size_t>(id)]) continue;
    std::copy(vec.begin(), vec.end(), table.begin() + static_cast<long>(static_cast<size_t>(id) * d));
    done[static_cast<size_t>(id)] = 1;
    ++replaced;
  }
  round_to_float(table);
  return replaced;
}

Matrix positional_encoding(size_t n, size_t d_model) {
  Matrix pe(n, d_model);
  for (size_t pos = 0; pos < n; ++pos) {
    for (size_t i = 0; i < d_model; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d_model));
      pe.at(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < d_model) pe.at(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

namespace detail {

ParamIndex index_params(const ModelParams& params) {
  ParamIndex idx;
  auto off = [&](const std::string& name) { return params.tensor(name).offset; };
  idx.embedding = off("embedding");
  for (size_t l = 0; l < params.config.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerIndex li{};
    li.wq = off(p + "wq");
    li.bq = off(p + "bq");
    li.wk = off(p + "wk");
    li.bk = off(p + "bk");
    li.wv = off(p + "wv");
    li.bv = off(p + "bv");
    li.wo = off(p + "wo");
    li.bo = off(p + "bo");
    li.ln1_gamma = off(p + "ln1.gamma");
    li.ln1_beta = off(p + "ln1.beta");
    li.ff1_w = off(p + "ff1.w");
    li.ff1_b = off(p + "ff1.b");
    li.ff2_w = off(p + "ff2.w");
    li.ff2_b = off(p + "ff2.b");
    li.ln2_gamma = off(p + "ln2.gamma");
    li.ln2_beta = off(p + "ln2.beta");
    idx.layers.push_back(li);
  }
  idx.head_w = off("head.w");
  idx.head_b = off("head.b");
  return idx;
}

namespace {

// y = x * W^T + b, W is out x in.
void linear(const Matrix& x, const double* w, const double* b, size_t out, Matrix& y) {
  const auto& k = kernels::active();
  y = Matrix(x.rows, out);
  for (size_t i = 0; i < x.rows; ++i) {
    double* yr = y.row(i);
    k.gemv(w, x.row(i), yr, out, x.cols);
    for (size_t o = 0; o < out; ++o) yr[o] += b[o];
  }
}

void linear_backward(const Matrix& x, const double* w, const Matrix& dy, double* dw, double* db, Matrix* dx) {
  const auto& k = kernels::active();
  const size_t in = x.cols;
  for (size_t i = 0; i < dy.rows; ++i) {
    const double* g = dy.row(i);
    for (size_t o = 0; o < dy.cols; ++o) {
      if (g[o] == 0.0) continue;
      k.axpy(g[o], x.row(i), dw + o * in, in);
      db[o] += g[o];
      if (dx) k.axpy(g[o], w + o * in, dx->row(i), in);
    }
  }
}

void layer_norm(const Matrix& z, const double* gamma, const double* beta, LayerNormCache& c, Matrix& out) {
  const size_t d = z.cols;
  c.xhat = Matrix(z.rows, d);
  c.inv_std.assign(z.rows, 0.0);
  out = Matrix(z.rows, d);
  for (size_t i = 0; i < z.rows; ++i) {
    const double* zr = z.row(i);
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += zr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (zr[j] - mean) * (zr[j] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.inv_std[i] = inv;
    double* xh = c.xhat.row(i);
    double* o = out.row(i);
    for (size_t j = 0; j < d; ++j) {
      xh[j] = (zr[j] - mean) * inv;
      o[j] = gamma[j] * xh[j] + beta[j];
    }
  }
}

void layer_norm_backward(const LayerNormCache& c, const double* gamma, const Matrix& dy, double* dgamma,
                         double* dbeta, Matrix& dz) {
  const size_t d = dy.cols;
  dz = Matrix(dy.rows, d);
  std::vector<double> dxhat(d);
  for (size_t i = 0; i < dy.rows; ++i) {
    const double* g = dy.row(i);
    const double* xh = c.xhat.row(i);
    double m1 = 0.0, m2 = 0.0;
    for (size_t j = 0; j < d; ++j) {
      dgamma[j] += g[j] * xh[j];
      dbeta[j] += g[j];
      dxhat[j] = g[j] * gamma[j];
      m1 += dxhat[j];
      m2 += dxhat[j] * xh[j];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double* out = dz.row(i);
    for (size_t j = 0; j < d; ++j) out[j] = c.inv_std[i] * (dxhat[j] - m1 - xh[j] * m2);
  }
}

void softmax_inplace(double* v, size_t n) {
  double m = v[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, v[i]);
  double z = 0.0;
  for (size_t i = 0; i < n; ++i) {
    v[i] = std::exp(v[i] - m);
    z += v[i];
  }
  for (size_t i = 0; i < n; ++i) v[i] /= z;
}

Matrix dropout_mask(size_t rows, size_t cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (double& x : m.data) x = rng.uniform() < rate ? 0.0 : keep;
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.data.empty()) return;
  for (size_t i = 0; i < x.data.size(); ++i) x.data[i] *= mask.data[i];
}

// Projections, per-head attention and output projection. Fills q/k/v, probs
// and context in `c`; returns the projected output.
Matrix attention_block(const ModelParams& params, const LayerIndex& li, const Matrix& x, LayerCache& c) {
  const auto& cfg = params.config;
  const double* w = params.values.data();
  const size_t n = x.rows, d = cfg.d_model, dk = cfg.d_k;
  linear(x, w + li.wv, w + li.bv, d, c.v);
  c.probs.clear();
  if (cfg.ablation.use_attention) {
    const auto& k = kernels::active();
    linear(x, w + li.wq, w + li.bq, d, c.q);
    linear(x, w + li.wk, w + li.bk, d, c.k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    c.context = Matrix(n, d);
    for (size_t h = 0; h < cfg.n_heads; ++h) {
      Matrix p(n, n);
      const size_t off = h * dk;
      for (size_t i = 0; i < n; ++i) {
        double* pr = p.row(i);
        for (size_t j = 0; j < n; ++j) pr[j] = k.dot(c.q.row(i) + off, c.k.row(j) + off, dk) * scale;
        softmax_inplace(pr, n);
        for (size_t j = 0; j < n; ++j) k.axpy(pr[j], c.v.row(j) + off, c.context.row(i) + off, dk);
      }
      c.probs.push_back(std::move(p));
    }
  } else {
    c.q = Matrix();
    c.k = Matrix();
    c.context = c.v;
  }
  Matrix out;
  linear(c.context, w + li.wo, w + li.bo, d, out);
  return out;
}

void check_ids(std::span<const TokenId> ids, const ModelConfig& cfg) {
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= cfg.vocab_size)
      fail(ErrorKind::kContract, "token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                                     " outside vocabulary of " + std::to_string(cfg.vocab_size));
}

}  // namespace

void forward(const ModelParams& params, const ParamIndex& index, std::span<const TokenId> ids,
             Rng* dropout_rng, ForwardCache& cache) {
  const auto& cfg = params.config;
  const double* w = params.values.data();
  const size_t n = ids.size(), d = cfg.d_model;
  const bool drop = dropout_rng != nullptr && cfg.dropout_rate > 0.0;

  cache.ids.assign(ids.begin(), ids.end());
  Matrix x = embed(ids, params);
  cache.input_mask = drop ? dropout_mask(n, d, cfg.dropout_rate, *dropout_rng) : Matrix();
  apply_mask(x, cache.input_mask);

  cache.layers.resize(cfg.n_layers);
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerIndex& li = index.layers[l];
    LayerCache& c = cache.layers[l];
    c.input = x;

    Matrix attn = attention_block(params, li, x, c);
    c.attn_mask = drop ? dropout_mask(n, d, cfg.dropout_rate, *dropout_rng) : Matrix();
    apply_mask(attn, c.attn_mask);
    for (size_t i = 0; i < attn.data.size(); ++i) attn.data[i] += x.data[i];
    layer_norm(attn, w + li.ln1_gamma, w + li.ln1_beta, c.ln1, c.ln1_out);

    linear(c.ln1_out, w + li.ff1_w, w + li.ff1_b, cfg.d_ff, c.ff_pre);
    c.ff_act = c.ff_pre;
    const double slope = cfg.activation == Activation::kLeakyRelu ? cfg.leaky_slope : 0.0;
    for (double& v : c.ff_act.data)
      if (v < 0.0) v *= slope;
    Matrix ff;
    linear(c.ff_act, w + li.ff2_w, w + li.ff2_b, d, ff);
    c.ff_mask = drop ? dropout_mask(n, d, cfg.dropout_rate, *dropout_rng) : Matrix();
    apply_mask(ff, c.ff_mask);
    for (size_t i = 0; i < ff.data.size(); ++i) ff.data[i] += c.ln1_out.data[i];
    layer_norm(ff, w + li.ln2_gamma, w + li.ln2_beta, c.ln2, x);
  }
  cache.output = std::move(x);
  linear(cache.output, w + index.head_w, w + index.head_b, kNumClasses, cache.logits);
}

void backward(const ModelParams& params, const ParamIndex& index, const ForwardCache& cache,
              const Matrix& dlogits, double* grad) {
  const auto& cfg = params.config;
  const auto& k = kernels::active();
  const double* w = params.values.data();
  const size_t n = cache.ids.size(), d = cfg.d_model, dk = cfg.d_k;

  Matrix dx(n, d);
  linear_backward(cache.output, w + index.head_w, dlogits, grad + index.head_w, grad + index.head_b, &dx);

  for (size_t l = cfg.n_layers; l-- > 0;) {
    const LayerIndex& li = index.layers[l];
    const LayerCache& c = cache.layers[l];

    // out = LN2(ln1_out + drop(ff2(act(ff1(ln1_out)))))
    Matrix dz2;
    layer_norm_backward(c.ln2, w + li.ln2_gamma, dx, grad + li.ln2_gamma, grad + li.ln2_beta, dz2);
    Matrix dln1 = dz2;
    Matrix dff = dz2;
    apply_mask(dff, c.ff_mask);
    Matrix dact(n, cfg.d_ff);
    linear_backward(c.ff_act, w + li.ff2_w, dff, grad + li.ff2_w, grad + li.ff2_b, &dact);
    const double slope = cfg.activation == Activation::kLeakyRelu ? cfg.leaky_slope : 0.0;
    for (size_t i = 0; i < dact.data.size(); ++i)
      if (c.ff_pre.data[i] < 0.0) dact.data[i] *= slope;
    linear_backward(c.ln1_out, w + li.ff1_w, dact, grad + li.ff1_w, grad + li.ff1_b, &dln1);

    // ln1_out = LN1(input + drop(attention(input)))
    Matrix dz1;
    layer_norm_backward(c.ln1, w + li.ln1_gamma, dln1, grad + li.ln1_gamma, grad + li.ln1_beta, dz1);
    Matrix dinput = dz1;
    Matrix dattn = dz1;
    apply_mask(dattn, c.attn_mask);

    Matrix dcontext(n, d);
    linear_backward(c.context, w + li.wo, dattn, grad + li.wo, grad + li.bo, &dcontext);

    Matrix dv(n, d);
    if (cfg.ablation.use_attention) {
      Matrix dq(n, d), dkm(n, d);
      const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
      std::vector<double> dp(n);
      for (size_t h = 0; h < cfg.n_heads; ++h) {
        const Matrix& p = c.probs[h];
        const size_t off = h * dk;
        for (size_t i = 0; i < n; ++i) {
          const double* pr = p.row(i);
          const double* dci = dcontext.row(i) + off;
          double inner = 0.0;
          for (size_t j = 0; j < n; ++j) {
            dp[j] = k.dot(dci, c.v.row(j) + off, dk);
            inner += pr[j] * dp[j];
            k.axpy(pr[j], dci, dv.row(j) + off, dk);
          }
          for (size_t j = 0; j < n; ++j) {
            const double ds = pr[j] * (dp[j] - inner) * scale;
            if (ds == 0.0) continue;
            k.axpy(ds, c.k.row(j) + off, dq.row(i) + off, dk);
            k.axpy(ds, c.q.row(i) + off, dkm.row(j) + off, dk);
          }
        }
      }
      linear_backward(c.input, w + li.wq, dq, grad + li.wq, grad + li.bq, &dinput);
      linear_backward(c.input, w + li.wk, dkm, grad + li.wk, grad + li.bk, &dinput);
    } else {
      dv = dcontext;
    }
    linear_backward(c.input, w + li.wv, dv, grad + li.wv, grad + li.bv, &dinput);
    dx = std::move(dinput);
  }

  apply_mask(dx, cache.input_mask);
  for (size_t i = 0; i < n; ++i)
    k.axpy(1.0, dx.row(i), grad + index.embedding + static_cast<size_t>(cache.ids[i]) * d, d);
}

double cross_entropy(const Matrix& logits, std::span<const uint8_t> bias, double scale, Matrix* dlogits) {
  double total = 0.0;
  if (dlogits) *dlogits = Matrix(logits.rows, kNumClasses);
  for (size_t i = 0; i < logits.rows; ++i) {
    const double* l = logits.row(i);
    const size_t gold = bias[i] ? kBiasClass : kOutsideClass;
    const double m = std::max(l[0], l[1]);
    const double lse = m + std::log(std::exp(l[0] - m) + std::exp(l[1] - m));
    total += lse - l[gold];
    if (dlogits) {
      for (size_t c = 0; c < kNumClasses; ++c) {
        const double p = std::exp(l[c] - lse);
        dlogits->at(i, c) = scale * (p - (c == gold ? 1.0 : 0.0));
      }
    }
  }
  return total;
}

}  // namespace detail

Matrix embed(std::span<const TokenId> ids, const ModelParams& params) {
  const auto& cfg = params.config;
  detail::check_ids(ids, cfg);
  const size_t n = ids.size(), d = cfg.d_model;
  Matrix x(n, d);
  const double* table = params.values.data() + params.tensor("embedding").offset;
  for (size_t i = 0; i < n; ++i)
    std::copy(table + static_cast<size_t>(ids[i]) * d, table + static_cast<size_t>(ids[i] + 1) * d, x.row(i));
  if (cfg.positional_encoding && n > 0) {
    const Matrix pe = positional_encoding(n, d);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += pe.data[i];
  }
  return x;
}

Matrix attention(const Matrix& x, const ModelParams& params, size_t layer, std::vector<Matrix>* weights) {
  require(layer < params.config.n_layers, "attention layer index out of range");
  require(x.cols == params.config.d_model, "attention input width must equal d_model");
  require(x.rows >= 1, "attention needs at least one position");
  for (double v : x.data)
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "non-finite value in attention input");
  const auto index = detail::index_params(params);
  detail::LayerCache c;
  Matrix out = detail::attention_block(params, index.layers[layer], x, c);
  if (weights) {
    if (params.config.ablation.use_attention) {
      *weights = std::move(c.probs);
    } else {
      weights->assign(params.config.n_heads, Matrix(x.rows, x.rows));
      for (auto& m : *weights)
        for (size_t i = 0; i < x.rows; ++i) m.at(i, i) = 1.0;
    }
  }
  return out;
}

Matrix encode_seq(std::span<const TokenId> ids, const ModelParams& params) {
  const auto index = detail::index_params(params);
  detail::ForwardCache cache;
  detail::forward(params, index, ids, nullptr, cache);
  return std::move(cache.output);
}

std::vector<TokenPrediction> classify_tokens(const Matrix& reps, const ModelParams& params) {
  require(reps.cols == params.config.d_model, "representation width must equal d_model");
  const auto& k = kernels::active();
  const double* w = params.values.data() + params.tensor("head.w").offset;
  const double* b = params.values.data() + params.tensor("head.b").offset;
  std::vector<TokenPrediction> out(reps.rows);
  for (size_t i = 0; i < reps.rows; ++i) {
    for (size_t j = 0; j < reps.cols; ++j)
      if (!std::isfinite(reps.at(i, j))) fail(ErrorKind::kNumeric, "non-finite representation");
    double logits[kNumClasses];
    k.gemv(w, reps.row(i), logits, kNumClasses, reps.cols);
    for (size_t c = 0; c < kNumClasses; ++c) logits[c] += b[c];
    const double m = std::max(logits[0], logits[1]);
    const double eb = std::exp(logits[kBiasClass] - m);
    const double eo = std::exp(logits[kOutsideClass] - m);
    out[i].p_bias = eb / (eb + eo);
    out[i].p_o = eo / (eb + eo);
    out[i].tag = out[i].p_bias > out[i].p_o ? Tag::kBias : Tag::kO;
  }
  return out;
}

std::vector<TokenPrediction> predict_tokens(std::span<const Token> tokens, const ModelParams& params,
                                            const Vocab& vocab) {
  std::vector<TokenPrediction> out;
  out.reserve(tokens.size());
  const size_t window = params.config.max_len;
  for (size_t start = 0; start < tokens.size(); start += window) {
    const size_t len = std::min(window, tokens.size() - start);
    const auto ids = encode(tokens.subspan(start, len), vocab, window);
    const auto preds = classify_tokens(encode_seq(ids, params), params);
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

LabeledText label_sequence(std::string_view text, const ModelParams& params, const Vocab& vocab) {
  LabeledText out;
  out.sentence.text = std::string(text);
  out.sentence.scheme = Scheme::kCollapsed;
  out.sentence.tokens = tokenize(text);
  out.predictions = predict_tokens(out.sentence.tokens, params, vocab);
  for (const auto& p : out.predictions) out.sentence.tags.push_back(p.tag);
  out.sentence.provenance.assign(out.sentence.tokens.size(), Provenance::kModel);
  return out;
}

}  // namespace biasner
