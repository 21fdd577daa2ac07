#include <algorithm>
#include <cmath>
#include <numeric>

#include "biasner/error.hpp"
#include "biasner/model.hpp"
#include "model_internal.hpp"

namespace biasner {

Hyper Hyper::as_published() {
  Hyper h;
  h.learning_rate = 1e-2;
  h.momentum = 0.5;
  h.weight_decay = 0.01;
  h.epochs = 5;
  h.batch_size = 16;
  h.beta1 = 0.9;
  h.beta2 = 0.999;
  h.epsilon = 1e-8;
  return h;
}

std::vector<Example> make_examples(std::span<const TaggedSentence> sentences, const Vocab& vocab,
                                   size_t max_len) {
  require(max_len >= 1, "max_len must be >= 1");
  std::vector<Example> out;
  for (const auto& s : sentences) {
    validate(s);
    for (size_t start = 0; start < s.tokens.size(); start += max_len) {
      const size_t len = std::min(max_len, s.tokens.size() - start);
      Example ex;
      ex.ids = encode(std::span<const Token>(s.tokens).subspan(start, len), vocab, max_len);
      for (size_t i = start; i < start + len; ++i) ex.bias.push_back(is_bias(s.tags[i]) ? 1 : 0);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

namespace {

void check_example(const Example& ex, const ModelConfig& cfg) {
  require(ex.ids.size() == ex.bias.size(), "example ids and labels differ in length");
  require(ex.ids.size() <= cfg.max_len, "example longer than max_len");
}

size_t token_count(std::span<const Example> batch) {
  size_t n = 0;
  for (const auto& ex : batch) n += ex.ids.size();
  return n;
}

// Mean token cross-entropy without gradients.
double batch_loss(const ModelParams& params, const detail::ParamIndex& index, std::span<const Example> batch) {
  const size_t tokens = token_count(batch);
  if (tokens == 0) return 0.0;
  double total = 0.0;
  detail::ForwardCache cache;
  for (const auto& ex : batch) {
    if (ex.ids.empty()) continue;
    detail::forward(params, index, ex.ids, nullptr, cache);
    total += detail::cross_entropy(cache.logits, ex.bias, 1.0, nullptr);
  }
  return total / static_cast<double>(tokens);
}

double accumulate_batch(const ModelParams& params, const detail::ParamIndex& index,
                        std::span<const Example> batch, Rng* dropout_rng, std::vector<double>& grad) {
  const size_t tokens = token_count(batch);
  grad.assign(params.values.size(), 0.0);
  if (tokens == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(tokens);
  double total = 0.0;
  detail::ForwardCache cache;
  Matrix dlogits;
  for (const auto& ex : batch) {
    if (ex.ids.empty()) continue;
    detail::forward(params, index, ex.ids, dropout_rng, cache);
    total += detail::cross_entropy(cache.logits, ex.bias, scale, &dlogits);
    detail::backward(params, index, cache, dlogits, grad.data());
  }
  return total * scale;
}

}  // namespace

double loss_and_gradient(const ModelParams& params, std::span<const Example> batch, std::vector<double>& grad) {
  for (const auto& ex : batch) check_example(ex, params.config);
  const auto index = detail::index_params(params);
  return accumulate_batch(params, index, batch, nullptr, grad);
}

LossEval evaluate_loss(const ModelParams& params, std::span<const Example> examples) {
  const auto index = detail::index_params(params);
  LossEval r;
  double total = 0.0;
  size_t tp = 0, fp = 0, fn = 0;
  detail::ForwardCache cache;
  for (const auto& ex : examples) {
    check_example(ex, params.config);
    if (ex.ids.empty()) continue;
    detail::forward(params, index, ex.ids, nullptr, cache);
    total += detail::cross_entropy(cache.logits, ex.bias, 1.0, nullptr);
    for (size_t i = 0; i < ex.ids.size(); ++i) {
      const bool pred = cache.logits.at(i, kBiasClass) > cache.logits.at(i, kOutsideClass);
      const bool gold = ex.bias[i] != 0;
      tp += pred && gold;
      fp += pred && !gold;
      fn += !pred && gold;
    }
    r.tokens += ex.ids.size();
  }
  if (r.tokens > 0) r.loss = total / static_cast<double>(r.tokens);
  const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double rc = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.token_f1 = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
  return r;
}

TrainReport train(ModelParams& params, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const Hyper& hyper, const EpochCallback& on_epoch) {
  TrainReport report;
  if (hyper.epochs == 0) return report;
  require(!train_set.empty(), "training set is empty");
  require(hyper.batch_size >= 1, "batch size must be >= 1");
  for (const auto& ex : train_set) check_example(ex, params.config);
  for (const auto& ex : dev_set) check_example(ex, params.config);

  const auto index = detail::index_params(params);
  const size_t n_values = params.values.size();

  // Per-value update flags: frozen embeddings are skipped entirely.
  std::vector<uint8_t> trainable(n_values, 1), decays(n_values, 0);
  for (const auto& t : params.layout) {
    const bool frozen =
        t.name == "embedding" && params.config.ablation.embedding_source == EmbeddingSource::kExternalStatic;
    std::fill_n(trainable.begin() + static_cast<long>(t.offset), t.size(), frozen ? 0 : 1);
    std::fill_n(decays.begin() + static_cast<long>(t.offset), t.size(), t.decay ? 1 : 0);
  }

  Rng order_rng(hyper.seed);
  Rng dropout_rng(hyper.seed ^ 0x5deece66dULL);
  std::vector<double> m(n_values, 0.0), v(n_values, 0.0), grad;
  std::vector<size_t> order(train_set.size());
  std::vector<Example> batch;

  double best_dev = INFINITY;
  std::vector<double> best_values;
  size_t stale = 0;

  for (size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    order_rng.shuffle(std::span<size_t>(order));
    double loss_sum = 0.0;
    size_t loss_tokens = 0;

    for (size_t start = 0; start < order.size(); start += hyper.batch_size) {
      const size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
      const size_t tokens = token_count(batch);
      if (tokens == 0) continue;

      const double loss = accumulate_batch(params, index, batch, &dropout_rng, grad);
      if (!std::isfinite(loss))
        fail(ErrorKind::kNumeric, "non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(report.steps + 1));
      loss_sum += loss * static_cast<double>(tokens);
      loss_tokens += tokens;
      ++report.steps;

      const double t = static_cast<double>(report.steps);
      if (hyper.optimizer == Optimizer::kAdamW) {
        const double bc1 = 1.0 - std::pow(hyper.beta1, t);
        const double bc2 = 1.0 - std::pow(hyper.beta2, t);
        for (size_t i = 0; i < n_values; ++i) {
          if (!trainable[i]) continue;
          const double g = grad[i];
          m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
          v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
          double step = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + hyper.epsilon);
          if (decays[i]) step += hyper.weight_decay * params.values[i];
          params.values[i] -= hyper.learning_rate * step;
        }
      } else {
        for (size_t i = 0; i < n_values; ++i) {
          if (!trainable[i]) continue;
          double g = grad[i];
          if (decays[i]) g += hyper.weight_decay * params.values[i];
          m[i] = hyper.momentum * m[i] + g;
          params.values[i] -= hyper.learning_rate * m[i];
        }
      }
      round_to_float(params.values);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_tokens ? loss_sum / static_cast<double>(loss_tokens) : 0.0;
    if (!dev_set.empty()) {
      const LossEval dev = evaluate_loss(params, dev_set);
      stats.dev_loss = dev.loss;
      stats.dev_f1 = dev.token_f1;
    }
    report.epochs.push_back(stats);
    report.epochs_run = epoch;
    if (on_epoch) on_epoch(stats);

    if (!dev_set.empty()) {
      if (stats.dev_loss < best_dev - hyper.min_delta) {
        best_dev = stats.dev_loss;
        best_values = params.values;
        report.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= hyper.patience && epoch < hyper.epochs) {
        report.stopped_early = true;
        break;
      }
    } else {
      report.best_epoch = epoch;
    }
  }
  if (hyper.restore_best && !best_values.empty()) params.values = std::move(best_values);
  return report;
}

GradCheckResult grad_check(const ModelParams& params, std::span<const Example> batch, double epsilon,
                           double floor, size_t sample_limit, uint64_t seed) {
  GradCheckResult result;
  std::vector<double> analytic;
  loss_and_gradient(params, batch, analytic);
  double norm = 0.0;
  for (double g : analytic) norm += g * g;
  result.gradient_norm = std::sqrt(norm);

  const auto index = detail::index_params(params);
  ModelParams probe = params;
  Rng rng(seed);
  for (const auto& t : params.layout) {
    std::vector<size_t> entries(t.size());
    std::iota(entries.begin(), entries.end(), t.offset);
    if (entries.size() > sample_limit) {
      rng.shuffle(std::span<size_t>(entries));
      entries.resize(sample_limit);
    }
    for (size_t i : entries) {
      const double orig = probe.values[i];
      probe.values[i] = orig + epsilon;
      const double up = batch_loss(probe, index, batch);
      probe.values[i] = orig - epsilon;
      const double down = batch_loss(probe, index, batch);
      probe.values[i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = t.name;
      }
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace biasner
