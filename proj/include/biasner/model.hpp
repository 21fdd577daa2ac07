#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasner/corpus.hpp"
#include "biasner/rng.hpp"
#include "biasner/text.hpp"

namespace biasner {

enum class Activation : uint8_t { kRelu, kLeakyRelu };
enum class InitMode : uint8_t { kRandom, kWarm };
enum class EmbeddingSource : uint8_t { kLearned, kExternalStatic };

struct Ablation {
  // false: attention weights are the identity, so tokens never mix.
  bool use_attention = true;
  InitMode init = InitMode::kRandom;
  std::string warm_checkpoint;  // read when init == kWarm
  // kExternalStatic freezes the embedding table during training.
  EmbeddingSource embedding_source = EmbeddingSource::kLearned;

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  size_t vocab_size = 0;
  size_t d_model = 128;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t d_k = 32;
  size_t d_ff = 256;
  size_t max_len = 128;
  double dropout_rate = 0.1;
  Activation activation = Activation::kRelu;
  double leaky_slope = 0.01;
  bool positional_encoding = true;
  Ablation ablation;

  // Throws kConfig.
  void validate() const;

  // Canonical JSON: keys sorted, no whitespace.
  std::string to_json() const;
  static ModelConfig from_json(std::string_view json_text);

  bool operator==(const ModelConfig&) const = default;
};

// Output classes of the classifier head, in row order of its weight matrix.
inline constexpr size_t kBiasClass = 0;
inline constexpr size_t kOutsideClass = 1;
inline constexpr size_t kNumClasses = 2;

struct TensorInfo {
  std::string name;
  size_t rows = 0;
  size_t cols = 0;
  size_t offset = 0;
  // Init bound is 1/sqrt(fan_in); constant-initialized tensors use 1.
  size_t fan_in = 1;
  bool decay = false;  // receives weight decay

  size_t size() const { return rows * cols; }
};

// Tensors in declared order:
//   embedding [vocab x d]
//   layer{l}.{wq,wk,wv,wo} [d x d], layer{l}.{bq,bk,bv,bo} [1 x d]
//   layer{l}.ln1.{gamma,beta}, layer{l}.ff1.{w [dff x d], b}, layer{l}.ff2.{w [d x dff], b},
//   layer{l}.ln2.{gamma,beta}
//   head.w [2 x d], head.b [1 x 2]
std::vector<TensorInfo> make_layout(const ModelConfig& config);

struct ModelParams {
  ModelConfig config;
  std::vector<TensorInfo> layout;
  std::vector<double> values;

  const TensorInfo& tensor(std::string_view name) const;
  std::span<double> view(std::string_view name);
  std::span<const double> view(std::string_view name) const;

  bool operator==(const ModelParams& other) const {
    return config == other.config && values == other.values;
  }
};

// Uniform init in +-1/sqrt(fan_in); layer-norm gains 1 and shifts 0.
// Values are rounded to float precision so checkpoints round-trip exactly.
// With ablation.init == kWarm the parameters are loaded from
// ablation.warm_checkpoint instead (kLoad on missing or mismatched files).
ModelParams init_model(const ModelConfig& config, uint64_t seed);

// Overwrites embedding rows for vocabulary words found in a whitespace
// separated "word v1 ... vd" file (GloVe text format). Returns rows replaced.
size_t load_static_embeddings(ModelParams& params, const Vocab& vocab, const std::string& path);

void round_to_float(std::span<double> values);

// Row-major dense matrix.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
};

Matrix positional_encoding(size_t n, size_t d_model);

// Rows are embedding[ids[i]] + positional_encoding[i] (PE omitted when the
// config disables it). Throws kContract for ids outside the vocabulary.
Matrix embed(std::span<const TokenId> ids, const ModelParams& params);

// Multi-head scaled dot-product self-attention of one encoder layer,
// including value and output projections. No mask: every position sees every
// position. When `weights` is given it receives one n x n row-softmax matrix
// per head (identity matrices when attention is ablated).
Matrix attention(const Matrix& x, const ModelParams& params, size_t layer,
                 std::vector<Matrix>* weights = nullptr);

// Full encoder stack: per layer attention + residual + layer norm, then
// feed-forward + residual + layer norm. Inference mode (no dropout).
Matrix encode_seq(std::span<const TokenId> ids, const ModelParams& params);

struct TokenPrediction {
  Tag tag = Tag::kO;  // kBias or kO
  double p_bias = 0.0;
  double p_o = 1.0;
};

// Per-row two-way softmax of head.w * r + head.b. Ties predict O.
std::vector<TokenPrediction> classify_tokens(const Matrix& reps, const ModelParams& params);

struct LabeledText {
  TaggedSentence sentence;  // collapsed scheme, provenance model
  std::vector<TokenPrediction> predictions;
};

// tokenize -> encode -> encoder -> classifier. Texts longer than max_len
// tokens are labeled in consecutive windows so every token gets a tag.
LabeledText label_sequence(std::string_view text, const ModelParams& params, const Vocab& vocab);

// Labels for an already tokenized sentence.
std::vector<TokenPrediction> predict_tokens(std::span<const Token> tokens, const ModelParams& params,
                                            const Vocab& vocab);

// ---------------------------------------------------------------------------
// Training

struct Example {
  std::vector<TokenId> ids;
  std::vector<uint8_t> bias;  // 1 where the gold tag is BIAS
};

// Sentences longer than max_len are cut into max_len windows.
std::vector<Example> make_examples(std::span<const TaggedSentence> sentences, const Vocab& vocab,
                                   size_t max_len);

enum class Optimizer : uint8_t { kAdamW, kSgdMomentum };

struct Hyper {
  size_t epochs = 5;
  size_t batch_size = 16;
  Optimizer optimizer = Optimizer::kAdamW;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  double momentum = 0.5;  // kSgdMomentum only
  size_t patience = 2;
  double min_delta = 1e-4;
  bool restore_best = true;
  uint64_t seed = 13;

  // The optimizer settings reported for the original model.
  static Hyper as_published();
};

struct EpochStats {
  size_t epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  bool stopped_early = false;
  size_t epochs_run = 0;
  size_t steps = 0;
  size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch AdamW (or SGD with momentum) on token cross-entropy averaged
// over the batch's tokens. Sequences are processed at their own length, which
// is equivalent to padding with masked positions. Early stopping watches the
// dev loss. Throws kContract for an empty train set and kNumeric when the
// loss stops being finite.
TrainReport train(ModelParams& params, std::span<const Example> train_set,
                  std::span<const Example> dev_set, const Hyper& hyper,
                  const EpochCallback& on_epoch = {});

struct LossEval {
  double loss = 0.0;  // mean token cross-entropy
  double token_f1 = 0.0;
  size_t tokens = 0;
};

LossEval evaluate_loss(const ModelParams& params, std::span<const Example> examples);

// Mean token cross-entropy over the batch and its gradient with respect to
// every parameter (no dropout). `grad` is resized to params.values.size().
double loss_and_gradient(const ModelParams& params, std::span<const Example> batch,
                         std::vector<double>& grad);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  size_t entries_checked = 0;
  double gradient_norm = 0.0;
};

// Central differences (f(t+e) - f(t-e)) / 2e against the analytic gradient.
// Relative error per entry is |a - n| / max(|a|, |n|, floor); `floor` keeps
// entries whose true gradient is zero from dividing by roundoff. Tensors
// larger than `sample_limit` entries are checked on a seeded sample. The
// default floor sits well above the ~1e-11 roundoff of a central difference
// at epsilon 1e-5, e.g. for key biases whose exact gradient is zero.
GradCheckResult grad_check(const ModelParams& params, std::span<const Example> batch,
                           double epsilon = 1e-5, double floor = 1e-6,
                           size_t sample_limit = 10000, uint64_t seed = 7);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little endian):
//   8 bytes  magic "BIASNER\x01"
//   u32      format version
//   u32      config JSON byte length, then the canonical config JSON
//   u64      value count, then that many f32 values in layout order
//   u64      FNV-1a checksum of every preceding byte

inline constexpr uint32_t kCheckpointVersion = 1;

std::string serialize_model(const ModelParams& params);
ModelParams deserialize_model(std::string_view bytes);
// Written to a temporary file and renamed into place.
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);
// Also checks every tensor's shape against `expected`; the error names the
// first mismatching tensor.
ModelParams load_model(const std::string& path, const ModelConfig& expected);

uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t model_checksum(const ModelParams& params);

// Vocabulary stored next to a checkpoint as "<path>.vocab".
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

std::string read_file(const std::string& path);
// Temp file plus rename; the destination is either old or new content.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace biasner
