#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biasner/error.hpp"
#include "biasner/kernels.hpp"

using namespace biasner;
using namespace biasner::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<const KernelTable*> runnable() {
  std::vector<const KernelTable*> out{&scalar_table()};
  if (cpu_supports(Isa::kAvx2) && avx2_table()) out.push_back(avx2_table());
  if (cpu_supports(Isa::kNeon) && neon_table()) out.push_back(neon_table());
  return out;
}

}  // namespace

TEST(Kernels, ScalarMatchesNaiveLoops) {
  std::mt19937_64 rng(1);
  const auto& s = scalar_table();
  for (size_t n : {0, 1, 3, 4, 7, 8, 17, 64, 129}) {
    auto a = random_vec(rng, n), b = random_vec(rng, n);
    double ref = 0.0;
    for (size_t i = 0; i < n; ++i) ref += a[i] * b[i];
    EXPECT_NEAR(s.dot(a.data(), b.data(), n), ref, 1e-12);
    auto y = b;
    s.axpy(0.5, a.data(), y.data(), n);
    for (size_t i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(y[i], b[i] + 0.5 * a[i]);
    auto z = a;
    s.scale(-3.0, z.data(), n);
    for (size_t i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(z[i], -3.0 * a[i]);
  }
}

TEST(Kernels, VariantsAgreeWithScalar) {
  std::mt19937_64 rng(2);
  const auto& ref = scalar_table();
  for (const KernelTable* t : runnable()) {
    SCOPED_TRACE(std::string(isa_name(t->isa)));
    for (int trial = 0; trial < 200; ++trial) {
      const size_t n = rng() % 300;
      auto a = random_vec(rng, n), b = random_vec(rng, n);
      EXPECT_NEAR(t->dot(a.data(), b.data(), n), ref.dot(a.data(), b.data(), n), 1e-10);
      auto y1 = b, y2 = b;
      t->axpy(0.7, a.data(), y1.data(), n);
      ref.axpy(0.7, a.data(), y2.data(), n);
      for (size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-12);
      auto z1 = a, z2 = a;
      t->scale(1.3, z1.data(), n);
      ref.scale(1.3, z2.data(), n);
      for (size_t i = 0; i < n; ++i) EXPECT_NEAR(z1[i], z2[i], 1e-12);
      const size_t rows = 1 + rng() % 9, cols = rng() % 70;
      auto w = random_vec(rng, rows * cols), x = random_vec(rng, cols);
      std::vector<double> o1(rows), o2(rows);
      t->gemv(w.data(), x.data(), o1.data(), rows, cols);
      ref.gemv(w.data(), x.data(), o2.data(), rows, cols);
      for (size_t r = 0; r < rows; ++r) EXPECT_NEAR(o1[r], o2[r], 1e-10);
    }
  }
}

TEST(Kernels, BitwiseStableForFixedIsa) {
  std::mt19937_64 rng(3);
  auto a = random_vec(rng, 1001), b = random_vec(rng, 1001);
  for (const KernelTable* t : runnable()) {
    const double first = t->dot(a.data(), b.data(), a.size());
    for (int i = 0; i < 5; ++i) EXPECT_EQ(t->dot(a.data(), b.data(), a.size()), first);
  }
}

TEST(Kernels, SelectScalarAndBack) {
  const Isa before = active().isa;
  select(Isa::kScalar);
  EXPECT_EQ(active().isa, Isa::kScalar);
  select(before);
  EXPECT_EQ(active().isa, before);
}

TEST(Kernels, SelectUnavailableIsConfigError) {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (cpu_supports(isa)) continue;
    try {
      select(isa);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    }
  }
}

TEST(Kernels, AvailableIncludesScalar) {
  const auto isas = available_isas();
  EXPECT_NE(std::find(isas.begin(), isas.end(), Isa::kScalar), isas.end());
}
