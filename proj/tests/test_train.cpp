#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biasner/error.hpp"
#include "biasner/lexicon.hpp"
#include "biasner/model.hpp"
#include "model_oracle.hpp"
#include "oracles.hpp"

using namespace biasner;

namespace {

ModelConfig small_config(size_t layers = 1) {
  ModelConfig c;
  c.vocab_size = 10;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_k = 4;
  c.d_ff = 12;
  c.n_layers = layers;
  c.max_len = 8;
  c.dropout_rate = 0.0;
  return c;
}

std::vector<Example> random_batch(std::mt19937_64& rng, size_t count, size_t vocab) {
  std::vector<Example> out(count);
  for (auto& ex : out) {
    const size_t n = 1 + rng() % 6;
    for (size_t i = 0; i < n; ++i) {
      ex.ids.push_back(static_cast<TokenId>(rng() % vocab));
      ex.bias.push_back(rng() % 3 == 0);
    }
  }
  return out;
}

double oracle_loss(const ModelParams& p, const std::vector<Example>& batch) {
  const auto w = p.view("head.w");
  const auto b = p.view("head.b");
  const size_t d = p.config.d_model;
  double total = 0;
  size_t tokens = 0;
  for (const auto& ex : batch) {
    const auto reps = oracle::encode_ref(p, ex.ids);
    for (size_t i = 0; i < reps.size(); ++i) {
      double l[2];
      for (size_t c = 0; c < 2; ++c) {
        l[c] = b[c];
        for (size_t j = 0; j < d; ++j) l[c] += w[c * d + j] * reps[i][j];
      }
      const auto sm = oracle::softmax2(l[kBiasClass], l[kOutsideClass]);
      total -= std::log(ex.bias[i] ? sm[0] : sm[1]);
      ++tokens;
    }
  }
  return total / static_cast<double>(tokens);
}

}  // namespace

TEST(Loss, MatchesOracle) {
  std::mt19937_64 rng(1);
  const auto p = init_model(small_config(2), 5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto batch = random_batch(rng, 1 + rng() % 4, 10);
    std::vector<double> grad;
    EXPECT_NEAR(loss_and_gradient(p, batch, grad), oracle_loss(p, batch), 1e-9);
    EXPECT_EQ(grad.size(), p.values.size());
  }
}

TEST(Loss, RaggedBatchIsTokenWeightedMean) {
  std::mt19937_64 rng(2);
  const auto p = init_model(small_config(), 6);
  const auto batch = random_batch(rng, 5, 10);
  std::vector<double> g;
  double weighted = 0;
  size_t tokens = 0;
  for (const auto& ex : batch) {
    const std::vector<Example> one{ex};
    weighted += loss_and_gradient(p, one, g) * ex.ids.size();
    tokens += ex.ids.size();
  }
  EXPECT_NEAR(loss_and_gradient(p, batch, g), weighted / tokens, 1e-12);
}

TEST(GradCheck, SmallConfigs) {
  std::mt19937_64 rng(3);
  for (size_t layers : {1, 2}) {
    for (auto act : {Activation::kRelu, Activation::kLeakyRelu}) {
      for (bool use_attn : {true, false}) {
        auto cfg = small_config(layers);
        cfg.activation = act;
        cfg.ablation.use_attention = use_attn;
        const auto p = init_model(cfg, 21 + layers);
        const auto batch = random_batch(rng, 3, 10);
        const auto r = grad_check(p, batch);
        EXPECT_LT(r.max_relative_error, 1e-4) << layers << " layers, worst " << r.worst_tensor;
        EXPECT_EQ(r.entries_checked, p.values.size());
        EXPECT_GT(r.gradient_norm, 0.0);
      }
    }
  }
}

TEST(Train, DeterministicForSeed) {
  std::mt19937_64 rng(4);
  const auto data = random_batch(rng, 20, 10);
  Hyper h;
  h.epochs = 3;
  h.batch_size = 4;
  h.learning_rate = 1e-2;
  auto cfg = small_config();
  cfg.dropout_rate = 0.1;
  auto a = init_model(cfg, 1), b = init_model(cfg, 1);
  const auto ra = train(a, data, {}, h);
  const auto rb = train(b, data, {}, h);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(ra.steps, 15u);
  EXPECT_EQ(ra.epochs_run, 3u);
  EXPECT_EQ(rb.epochs.size(), 3u);
}

TEST(Train, LossDecreasesBothOptimizers) {
  std::mt19937_64 rng(5);
  const auto data = random_batch(rng, 16, 10);
  for (auto opt : {Optimizer::kAdamW, Optimizer::kSgdMomentum}) {
    auto p = init_model(small_config(), 2);
    const double before = evaluate_loss(p, data).loss;
    Hyper h;
    h.optimizer = opt;
    h.epochs = 40;
    h.batch_size = 4;
    h.learning_rate = opt == Optimizer::kAdamW ? 1e-2 : 5e-2;
    train(p, data, {}, h);
    EXPECT_LT(evaluate_loss(p, data).loss, before);
  }
}

TEST(Train, MemorizesLexiconSentence) {
  Lexicon lex;
  lex.add("value", "overpriced");
  lex.add("value", "highly successful");
  lex.add("value", "surprisingly popular");
  const auto s = lexicon_annotate(
      "The overpriced product from the highly successful company was surprisingly popular.", lex);
  const std::vector<TaggedSentence> set{s};
  const std::vector<std::vector<Token>> toks{s.tokens};
  const Vocab v = build_vocab(toks);
  auto cfg = small_config();
  cfg.vocab_size = v.size();
  cfg.max_len = 16;
  auto p = init_model(cfg, 3);
  Hyper h;
  h.epochs = 200;
  h.batch_size = 1;
  h.learning_rate = 1e-2;
  train(p, make_examples(set, v, cfg.max_len), {}, h);
  const auto out = label_sequence(s.text, p, v);
  for (size_t i = 0; i < s.tags.size(); ++i) EXPECT_EQ(is_bias(out.sentence.tags[i]), is_bias(s.tags[i])) << i;
}

TEST(Train, StaticEmbeddingsStayFrozen) {
  std::mt19937_64 rng(6);
  const auto data = random_batch(rng, 8, 10);
  auto cfg = small_config();
  cfg.ablation.embedding_source = EmbeddingSource::kExternalStatic;
  auto p = init_model(cfg, 2);
  const std::vector<double> before(p.view("embedding").begin(), p.view("embedding").end());
  Hyper h;
  h.epochs = 3;
  h.learning_rate = 1e-2;
  train(p, data, {}, h);
  const auto after = p.view("embedding");
  EXPECT_TRUE(std::equal(before.begin(), before.end(), after.begin()));
}

TEST(Train, EarlyStoppingBookkeeping) {
  std::mt19937_64 rng(7);
  const auto data = random_batch(rng, 12, 10);
  const auto dev = random_batch(rng, 6, 10);
  auto p = init_model(small_config(), 2);
  Hyper h;
  h.epochs = 60;
  h.batch_size = 2;
  h.learning_rate = 5e-2;
  h.patience = 1;
  size_t callbacks = 0;
  const auto r = train(p, data, dev, h, [&](const EpochStats&) { ++callbacks; });
  EXPECT_EQ(callbacks, r.epochs_run);
  EXPECT_LE(r.epochs_run, 60u);
  if (r.stopped_early) {
    EXPECT_LT(r.epochs_run, 60u);
    EXPECT_GE(r.epochs_run, r.best_epoch + h.patience);
  }
  // With restore_best the final parameters reproduce the best dev loss.
  double best = 1e300;
  for (const auto& e : r.epochs) best = std::min(best, e.dev_loss);
  EXPECT_NEAR(evaluate_loss(p, dev).loss, best, 1e-9);
}

TEST(Train, Errors) {
  auto p = init_model(small_config(), 2);
  EXPECT_THROW(train(p, {}, {}, Hyper{}), Error);
  std::mt19937_64 rng(8);
  const auto data = random_batch(rng, 4, 10);
  Hyper h;
  h.optimizer = Optimizer::kSgdMomentum;
  h.learning_rate = 1e300;
  h.epochs = 5;
  try {
    train(p, data, {}, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
  }
}

TEST(Examples, LongSentencesAreWindowed) {
  std::string text;
  for (int i = 0; i < 19; ++i) text += "w ";
  const std::vector<TaggedSentence> s{bio_from_spans(text, tokenize(text), {}, Provenance::kHuman)};
  const auto ex = make_examples(s, Vocab{}, 8);
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[2].ids.size(), 3u);
}
