#include <gtest/gtest.h>

#include <random>

#include "biasner/agreement.hpp"
#include "biasner/error.hpp"
#include "oracles.hpp"

using namespace biasner;

namespace {

std::vector<std::string> labels(size_t zeros, size_t ones) {
  std::vector<std::string> v(zeros, "O");
  v.insert(v.end(), ones, "BIAS");
  return v;
}

}  // namespace

TEST(Kappa, WorkedTable) {
  // [[20,5],[10,15]]: a=O,b=O 20; a=O,b=B 5; a=B,b=O 10; a=B,b=B 15.
  std::vector<std::string> a, b;
  auto push = [&](size_t n, const char* x, const char* y) {
    for (size_t i = 0; i < n; ++i) a.push_back(x), b.push_back(y);
  };
  push(20, "O", "O");
  push(5, "O", "B");
  push(10, "B", "O");
  push(15, "B", "B");
  const auto r = cohen_kappa(a, b);
  EXPECT_NEAR(r.observed_agreement, 0.70, 1e-12);
  EXPECT_NEAR(r.expected_agreement, 0.50, 1e-12);
  EXPECT_NEAR(r.kappa, 0.40, 1e-12);
  EXPECT_EQ(r.n_items, 50u);
}

TEST(Kappa, SelfAgreementIsOne) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> a;
    const size_t n = 1 + rng() % 30;
    for (size_t k = 0; k < n; ++k) a.push_back(std::to_string(rng() % 4));
    EXPECT_DOUBLE_EQ(cohen_kappa(a, a).kappa, 1.0);
  }
}

TEST(Kappa, DegenerateSingleLabel) {
  const auto a = labels(5, 0);
  EXPECT_DOUBLE_EQ(cohen_kappa(a, a).kappa, 1.0);
}

TEST(Kappa, MatchesOracleOnRandomTables) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    size_t n[4];
    for (auto& x : n) x = rng() % 20;
    if (n[0] + n[1] + n[2] + n[3] == 0) n[0] = 1;
    std::vector<std::string> a, b;
    const char* la[4] = {"O", "O", "B", "B"};
    const char* lb[4] = {"O", "B", "O", "B"};
    for (int c = 0; c < 4; ++c)
      for (size_t k = 0; k < n[c]; ++k) a.push_back(la[c]), b.push_back(lb[c]);
    EXPECT_NEAR(cohen_kappa(a, b).kappa, oracle::kappa_2x2(n[0], n[1], n[2], n[3]), 1e-9);
  }
}

TEST(Kappa, SymmetricAndBounded) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::string> a, b;
    for (int k = 0; k < 25; ++k) a.push_back(std::to_string(rng() % 3)), b.push_back(std::to_string(rng() % 3));
    const auto ab = cohen_kappa(a, b), ba = cohen_kappa(b, a);
    EXPECT_NEAR(ab.kappa, ba.kappa, 1e-12);
    EXPECT_LE(ab.kappa, 1.0);
    EXPECT_GE(ab.kappa, -1.0);
  }
}

TEST(Kappa, Errors) {
  const std::vector<std::string> a{"O"}, b{"O", "B"}, e;
  EXPECT_THROW(cohen_kappa(a, b), Error);
  EXPECT_THROW(cohen_kappa(e, e), Error);
}
