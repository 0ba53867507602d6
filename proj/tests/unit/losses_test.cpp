// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "engage/diffcore/grad_check.hpp"
#include "engage/diffcore/ops.hpp"
#include "engage/error.hpp"
#include "engage/losses/losses.hpp"
#include "test_util.hpp"

namespace engage::losses {
namespace {

using testing::random_tensor;

// Direct transcription of the summed anchor/positive/denominator triple loop.
double supcon_oracle(const Tensor& z, const std::vector<int>& labels, double tau) {
  const std::size_t n = z.dim(0), d = z.dim(1);
  auto dot = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += z.at(a, k) * z.at(b, k);
    return s;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> pos;
    for (std::size_t p = 0; p < n; ++p)
      if (p != i && labels[p] == labels[i]) pos.push_back(p);
    if (pos.empty()) continue;
    double inner = 0.0;
    for (std::size_t p : pos) {
      double denom = 0.0;
      for (std::size_t a = 0; a < n; ++a)
        if (a != i) denom += std::exp(dot(i, a) / tau);
      inner += std::log(std::exp(dot(i, p) / tau) / denom);
    }
    loss += -inner / static_cast<double>(pos.size());
  }
  return loss;
}

Tensor unit_rows(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Tensor z = random_tensor(rng, {n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += z.at(i, k) * z.at(i, k);
    for (std::size_t k = 0; k < d; ++k) z.at(i, k) /= std::sqrt(s);
  }
  return z;
}

double supcon_value(const Tensor& z, const std::vector<int>& labels, double tau, SupConDiagnostics* diag = nullptr) {
  Tape tape;
  return supcon_loss(tape.constant(z), labels, tau, diag).value().item();
}

TEST(SupCon, IdenticalPairIsZero) {
  EXPECT_NEAR(supcon_value(Tensor::matrix(2, 2, {0.6, 0.8, 0.6, 0.8}), {1, 1}, 0.1), 0.0, 1e-15);
}

TEST(SupCon, HandComputedThreeSampleCase) {
  SupConDiagnostics diag;
  const double loss = supcon_value(Tensor::matrix(3, 2, {1, 0, 1, 0, -1, 0}), {0, 0, 1}, 1.0, &diag);
  EXPECT_NEAR(loss, 2.0 * -std::log(std::exp(1.0) / (std::exp(1.0) + std::exp(-1.0))), 1e-12);
  EXPECT_NEAR(loss, 0.253856, 1e-5);
  EXPECT_EQ(diag.anchors, 3U);
  EXPECT_EQ(diag.anchors_without_positives, 1U);
}

TEST(SupCon, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(21);
  const double taus[] = {0.05, 0.1, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 5, d = 1 + rng() % 4, classes = 1 + rng() % 3;
    std::vector<int> labels(n);
    for (int& y : labels) y = static_cast<int>(rng() % classes);
    const Tensor z = unit_rows(rng, n, d);
    const double tau = taus[trial % 3];
    EXPECT_NEAR(supcon_value(z, labels, tau), supcon_oracle(z, labels, tau), 1e-10) << "trial " << trial;
  }
}

TEST(SupCon, NonNegativeAndPermutationInvariant) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6;
    std::vector<int> labels{0, 0, 1, 1, 2, static_cast<int>(rng() % 3)};
    const Tensor z = unit_rows(rng, n, 3);
    const double base = supcon_value(z, labels, 0.5);
    EXPECT_GE(base, 0.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor zp({n, 3});
    std::vector<int> lp(n);
    for (std::size_t i = 0; i < n; ++i) {
      lp[i] = labels[perm[i]];
      for (std::size_t k = 0; k < 3; ++k) zp.at(i, k) = z.at(perm[i], k);
    }
    EXPECT_NEAR(supcon_value(zp, lp, 0.5), base, 1e-12);
  }
}

TEST(SupCon, GradientNormGrowsAsTemperatureFalls) {
  std::mt19937_64 rng(23);
  Parameter z{"z", unit_rows(rng, 6, 4)};
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  double previous = 0.0;
  for (double tau : {2.0, 1.0, 0.5, 0.25, 0.1}) {
    Tape tape;
    const auto grads = tape.backward(supcon_loss(tape.param(z), labels, tau));
    double norm = 0.0;
    for (double g : grads.find(z)->data()) norm += g * g;
    norm = std::sqrt(norm);
    EXPECT_GT(norm, previous) << "tau " << tau;
    previous = norm;
  }
}

TEST(SupCon, GradCheckThroughNormalization) {
  std::mt19937_64 rng(24);
  Parameter raw = testing::random_param(rng, "raw", {5, 4});
  Parameter* params[] = {&raw};
  const std::vector<int> labels{0, 1, 0, 1, 1};
  for (double tau : {0.1, 1.0}) {
    const auto report = grad_check(
        [&](Tape& t) { return supcon_loss(ops::l2_normalize_rows(t.param(raw)), labels, tau); }, params);
    EXPECT_LT(report.max_relative_error, 1e-4) << tau;
  }
}

TEST(SupCon, Errors) {
  const Tensor one = Tensor::matrix(1, 2, {1, 0});
  EXPECT_THROW(supcon_value(one, {0}, 0.1), ContractError);
  const Tensor two = Tensor::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_THROW(supcon_value(two, {0, 1}, 0.0), ParameterError);
  EXPECT_THROW(supcon_value(two, {0, 1}, -1.0), ParameterError);
  EXPECT_THROW(supcon_value(Tensor::matrix(2, 2, {2, 0, 0, 1}), {0, 1}, 0.1), ContractError);
}

TEST(SupCon, AllLonelyAnchorsGiveZero) {
  SupConDiagnostics diag;
  EXPECT_EQ(supcon_value(Tensor::matrix(3, 2, {1, 0, 0, 1, -1, 0}), {0, 1, 2}, 0.1, &diag), 0.0);
  EXPECT_EQ(diag.anchors_without_positives, 3U);
}

double ce_value(const Tensor& logits, const std::vector<int>& labels, std::vector<double> w = {}) {
  Tape tape;
  return cross_entropy(tape.constant(logits), labels, w).value().item();
}

TEST(CrossEntropy, UniformLogits) {
  EXPECT_NEAR(ce_value(Tensor({3, 4}, 0.7), {0, 2, 3}), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, DecreasesToZeroWithMargin) {
  double previous = INFINITY;
  for (double margin : {0.0, 1.0, 5.0, 20.0, 100.0}) {
    const double loss = ce_value(Tensor::matrix(1, 3, {margin, 0, 0}), {0});
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-40);
  // Far past double resolution the loss underflows to zero instead of overflowing.
  EXPECT_EQ(ce_value(Tensor::matrix(1, 3, {800, 0, 0}), {0}), 0.0);
}

TEST(CrossEntropy, ShiftInvariant) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor(rng, {4, 4}, -3, 3);
    const double base = ce_value(logits, {0, 1, 2, 3}, {2, 2, 2.0 / 3, 2.0 / 3});
    for (double& v : logits.data()) v += 17.5;
    EXPECT_NEAR(ce_value(logits, {0, 1, 2, 3}, {2, 2, 2.0 / 3, 2.0 / 3}), base, 1e-12);
  }
}

TEST(CrossEntropy, MinorityWeightTriplesGradient) {
  const std::vector<double> w{2, 2, 2.0 / 3, 2.0 / 3};
  std::mt19937_64 rng(26);
  Parameter logits = testing::random_param(rng, "logits", {1, 4});
  auto grad_for = [&](int label) {
    Tape tape;
    const int labels[] = {label};
    return *tape.backward(cross_entropy(tape.param(logits), labels, w)).find(logits);
  };
  auto unweighted = [&](int label) {
    Tape tape;
    const int labels[] = {label};
    return *tape.backward(cross_entropy(tape.param(logits), labels)).find(logits);
  };
  const Tensor minority = grad_for(1), majority = grad_for(2);
  const Tensor ref1 = unweighted(1), ref2 = unweighted(2);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(minority[k], 2.0 * ref1[k], 1e-12);
    EXPECT_NEAR(majority[k], 2.0 / 3 * ref2[k], 1e-12);
  }
  // Same logits and label: weight 2 against weight 2/3 is a factor of three.
  Tape tape;
  const int one[] = {1};
  const std::vector<double> light{2.0 / 3, 2.0 / 3, 2.0 / 3, 2.0 / 3};
  const Tensor g_light = *tape.backward(cross_entropy(tape.param(logits), one, light)).find(logits);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(minority[k], 3.0 * g_light[k], 1e-12);
}

TEST(CrossEntropy, GradCheckWeightedAndUnweighted) {
  std::mt19937_64 rng(27);
  Parameter logits = testing::random_param(rng, "logits", {5, 3});
  Parameter* params[] = {&logits};
  const std::vector<int> labels{0, 1, 2, 1, 0};
  const std::vector<double> w{0.5, 2.0, 0.5};
  EXPECT_LT(grad_check([&](Tape& t) { return cross_entropy(t.param(logits), labels); }, params).max_relative_error, 1e-4);
  EXPECT_LT(grad_check([&](Tape& t) { return cross_entropy(t.param(logits), labels, w); }, params).max_relative_error, 1e-4);
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(ce_value(Tensor({2, 3}), {0, 3}), ContractError);
  EXPECT_THROW(ce_value(Tensor({2, 3}), {-1, 0}), ContractError);
}

TEST(BinaryCrossEntropy, Examples) {
  Tape tape;
  const int one[] = {1}, zero[] = {0};
  EXPECT_NEAR(binary_cross_entropy(tape.constant(Tensor::vector({0})), one).value().item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(binary_cross_entropy(tape.constant(Tensor::vector({0})), zero).value().item(), std::log(2.0), 1e-12);
  for (double l : {50.0, -50.0, 800.0, -800.0}) {
    for (const int* t : {one, zero}) {
      const double v = binary_cross_entropy(tape.constant(Tensor::vector({l})), std::span<const int>(t, 1)).value().item();
      EXPECT_TRUE(std::isfinite(v));
      const double expected = (*t == 1) ? std::max(-l, 0.0) + std::log1p(std::exp(-std::abs(l)))
                                        : std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l)));
      EXPECT_NEAR(v, expected, 1e-9);
    }
  }
  const int bad[] = {2};
  EXPECT_THROW(binary_cross_entropy(tape.constant(Tensor::vector({0})), bad), ContractError);
}

TEST(BinaryCrossEntropy, GradCheck) {
  std::mt19937_64 rng(28);
  Parameter logits = testing::random_param(rng, "logits", {6, 1});
  Parameter* params[] = {&logits};
  const std::vector<int> t{0, 1, 1, 0, 1, 0};
  EXPECT_LT(grad_check([&](Tape& tp) { return binary_cross_entropy(tp.param(logits), t); }, params).max_relative_error, 1e-4);
}

TEST(ClassWeights, TableCounts) {
  const std::vector<std::size_t> counts{25, 356, 3430, 2944};
  const double total = 6755.0;
  const auto raw = raw_class_weights(counts);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(raw[c], total / (4.0 * counts[c]), 1e-12);
  EXPECT_NEAR(raw[0], 67.55, 1e-12);
  const auto w = compute_class_weights(counts);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0) / 4.0, 1.0, 1e-12);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(w[c] / w[3], raw[c] / raw[3], 1e-12);
  EXPECT_GT(w[0], w[1]);
  EXPECT_GT(w[1], w[3]);
  EXPECT_GT(w[3], w[2]);
}

TEST(ClassWeights, BalancedAndScaleInvariant) {
  const std::vector<std::size_t> even{7, 7, 7}, counts{3, 9, 27}, doubled{6, 18, 54};
  for (double v : compute_class_weights(even)) EXPECT_DOUBLE_EQ(v, 1.0);
  const auto a = compute_class_weights(counts), b = compute_class_weights(doubled);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a[c], b[c], 1e-12);
}

TEST(ClassWeights, ZeroCountNamesRemedy) {
  const std::vector<std::size_t> counts{5, 0, 3};
  try {
    compute_class_weights(counts);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("oversample"), std::string::npos);
  }
}

}  // namespace
}  // namespace engage::losses
