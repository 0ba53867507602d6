// SPDX-License-Identifier: Apache-2.0
// The scalar table is the reference; every SIMD table must agree with it.
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "engage/kernels/kernels.hpp"

namespace engage::kernels {
namespace {

std::vector<double> random_buffer(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], tol * std::max(1.0, std::abs(a[i]))) << "index " << i;
  }
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!cpu_supports(Isa::avx2)) GTEST_SKIP() << "AVX2/FMA not available";
    simd = avx2_table();
  }
  const KernelTable& ref = scalar_table();
  const KernelTable* simd = nullptr;
  std::mt19937_64 rng{42};
};

TEST_F(SimdEquivalence, DotAndAxpyMatchAcrossTailLengths) {
  for (std::size_t n = 0; n < 40; ++n) {
    auto a = random_buffer(rng, n), b = random_buffer(rng, n);
    const double r = ref.dot(a.data(), b.data(), n);
    const double s = simd->dot(a.data(), b.data(), n);
    EXPECT_NEAR(r, s, 1e-12 * std::max(1.0, std::abs(r))) << "n=" << n;

    auto y1 = random_buffer(rng, n);
    auto y2 = y1;
    ref.axpy(0.37, a.data(), y1.data(), n);
    simd->axpy(0.37, a.data(), y2.data(), n);
    expect_close(y1, y2, 1e-14);
  }
}

TEST_F(SimdEquivalence, GemmVariantsMatchOnRandomShapes) {
  std::uniform_int_distribution<std::size_t> dim(1, 19);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
    auto a = random_buffer(rng, m * k), b = random_buffer(rng, k * n);
    auto c0 = random_buffer(rng, m * n);

    auto c1 = c0, c2 = c0;
    ref.gemm_nn(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
    simd->gemm_nn(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
    expect_close(c1, c2, 1e-12);

    // B viewed as [n x k] for the nt form
    auto bt = random_buffer(rng, n * k);
    c1 = c0, c2 = c0;
    ref.gemm_nt(m, n, k, a.data(), k, bt.data(), k, c1.data(), n);
    simd->gemm_nt(m, n, k, a.data(), k, bt.data(), k, c2.data(), n);
    expect_close(c1, c2, 1e-12);

    // A viewed as [k x m] for the tn form
    auto at = random_buffer(rng, k * m);
    c1 = c0, c2 = c0;
    ref.gemm_tn(m, n, k, at.data(), m, b.data(), n, c1.data(), n);
    simd->gemm_tn(m, n, k, at.data(), m, b.data(), n, c2.data(), n);
    expect_close(c1, c2, 1e-12);
  }
}

TEST(ScalarKernels, GemmMatchesNaiveTripleLoop) {
  std::mt19937_64 rng(7);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = random_buffer(rng, m * k), b = random_buffer(rng, k * n);
  std::vector<double> c(m * n, 0.0), expect(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) expect[i * n + j] += a[i * k + p] * b[p * n + j];
  scalar_table().gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n);
  expect_close(expect, c, 1e-14);
}

TEST(Dispatch, SelectScalarAndRestore) {
  const Isa before = active().isa;
  select(Isa::scalar);
  EXPECT_EQ(active().isa, Isa::scalar);
  if (cpu_supports(before)) select(before);
  EXPECT_EQ(active().isa, before);
}

}  // namespace
}  // namespace engage::kernels
