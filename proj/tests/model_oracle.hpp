#pragma once

// Straightforward re-implementation of the encoder forward pass used to check
// the library's kernels-based implementation.

#include <cmath>
#include <string>
#include <vector>

#include "biasner/model.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat affine(const biasner::ModelParams& p, const std::string& w, const std::string& b, const Mat& x) {
  const auto& tw = p.tensor(w);
  const auto W = p.view(w);
  const auto B = p.view(b);
  Mat y(x.size(), std::vector<double>(tw.rows));
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t o = 0; o < tw.rows; ++o) {
      double s = B[o];
      for (size_t c = 0; c < tw.cols; ++c) s += W[o * tw.cols + c] * x[i][c];
      y[i][o] = s;
    }
  return y;
}

inline Mat attention_ref(const biasner::ModelParams& p, size_t layer, const Mat& x) {
  const auto& cfg = p.config;
  const std::string L = "layer" + std::to_string(layer) + ".";
  const Mat v = affine(p, L + "wv", L + "bv", x);
  Mat ctx = v;
  if (cfg.ablation.use_attention) {
    const Mat q = affine(p, L + "wq", L + "bq", x);
    const Mat k = affine(p, L + "wk", L + "bk", x);
    const size_t n = x.size();
    for (size_t h = 0; h < cfg.n_heads; ++h) {
      const size_t off = h * cfg.d_k;
      for (size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (size_t j = 0; j < n; ++j) {
          double d = 0;
          for (size_t c = 0; c < cfg.d_k; ++c) d += q[i][off + c] * k[j][off + c];
          s[j] = d / std::sqrt(static_cast<double>(cfg.d_k));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (size_t c = 0; c < cfg.d_k; ++c) {
          double acc = 0;
          for (size_t j = 0; j < n; ++j) acc += s[j] / z * v[j][off + c];
          ctx[i][off + c] = acc;
        }
      }
    }
  }
  return affine(p, L + "wo", L + "bo", ctx);
}

inline Mat layer_norm_ref(const biasner::ModelParams& p, const std::string& prefix, const Mat& z) {
  const auto g = p.view(prefix + ".gamma");
  const auto b = p.view(prefix + ".beta");
  Mat out = z;
  for (size_t i = 0; i < z.size(); ++i) {
    const double d = static_cast<double>(z[i].size());
    double mean = 0, var = 0;
    for (double v : z[i]) mean += v;
    mean /= d;
    for (double v : z[i]) var += (v - mean) * (v - mean);
    var /= d;
    for (size_t j = 0; j < z[i].size(); ++j) out[i][j] = (z[i][j] - mean) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return out;
}

inline Mat embed_ref(const biasner::ModelParams& p, const std::vector<biasner::TokenId>& ids) {
  const size_t d = p.config.d_model;
  const auto E = p.view("embedding");
  Mat x(ids.size(), std::vector<double>(d));
  for (size_t i = 0; i < ids.size(); ++i)
    for (size_t j = 0; j < d; ++j) {
      double pe = 0;
      if (p.config.positional_encoding) {
        const size_t even = j - j % 2;
        const double angle = static_cast<double>(i) / std::pow(10000.0, static_cast<double>(even) / d);
        pe = j % 2 ? std::cos(angle) : std::sin(angle);
      }
      x[i][j] = E[ids[i] * d + j] + pe;
    }
  return x;
}

inline Mat encode_ref(const biasner::ModelParams& p, const std::vector<biasner::TokenId>& ids) {
  Mat x = embed_ref(p, ids);
  const auto& cfg = p.config;
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string L = "layer" + std::to_string(l) + ".";
    Mat a = attention_ref(p, l, x);
    for (size_t i = 0; i < x.size(); ++i)
      for (size_t j = 0; j < x[i].size(); ++j) a[i][j] += x[i][j];
    const Mat h = layer_norm_ref(p, L + "ln1", a);
    Mat f = affine(p, L + "ff1.w", L + "ff1.b", h);
    const double slope = cfg.activation == biasner::Activation::kLeakyRelu ? cfg.leaky_slope : 0.0;
    for (auto& row : f)
      for (auto& v : row)
        if (v < 0) v *= slope;
    Mat o = affine(p, L + "ff2.w", L + "ff2.b", f);
    for (size_t i = 0; i < o.size(); ++i)
      for (size_t j = 0; j < o[i].size(); ++j) o[i][j] += h[i][j];
    x = layer_norm_ref(p, L + "ln2", o);
  }
  return x;
}

}  // namespace oracle
