#pragma once

#include <vector>

#include "biasner/model.hpp"

namespace biasner::detail {

struct LayerIndex {
  size_t wq, bq, wk, bk, wv, bv, wo, bo;
  size_t ln1_gamma, ln1_beta;
  size_t ff1_w, ff1_b, ff2_w, ff2_b;
  size_t ln2_gamma, ln2_beta;
};

// Offsets of every tensor into ModelParams::values.
struct ParamIndex {
  size_t embedding = 0;
  std::vector<LayerIndex> layers;
  size_t head_w = 0;
  size_t head_b = 0;
};

ParamIndex index_params(const ModelParams& params);

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

struct LayerCache {
  Matrix input;                // n x d
  Matrix q, k, v;              // n x d
  std::vector<Matrix> probs;   // per head, n x n
  Matrix context;              // heads concatenated, n x d
  Matrix attn_mask;            // dropout scale per element, empty when off
  LayerNormCache ln1;
  Matrix ln1_out;              // n x d
  Matrix ff_pre;               // n x dff
  Matrix ff_act;               // n x dff
  Matrix ff_mask;
  LayerNormCache ln2;
};

struct ForwardCache {
  std::vector<TokenId> ids;
  Matrix input_mask;
  std::vector<LayerCache> layers;
  Matrix output;  // n x d, r(x_i)
  Matrix logits;  // n x 2
};

// With a non-null rng, inverted dropout is applied to the embedded input,
// the attention output and the feed-forward output.
void forward(const ModelParams& params, const ParamIndex& index, std::span<const TokenId> ids,
             Rng* dropout_rng, ForwardCache& cache);

// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
void backward(const ModelParams& params, const ParamIndex& index, const ForwardCache& cache,
              const Matrix& dlogits, double* grad);

// Sum of token cross-entropies; writes scale * (softmax - onehot) to dlogits.
double cross_entropy(const Matrix& logits, std::span<const uint8_t> bias, double scale, Matrix* dlogits);

}  // namespace biasner::detail
