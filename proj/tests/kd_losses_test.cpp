#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "topokd/kd_losses.hpp"

using namespace topokd::distill;
using topokd::nn::Tensor;
using topokd::testing::logits_grad_check;
using topokd::testing::random_tensor;

namespace {

// Straightforward reimplementation: probabilities by exp / sum, then
// T^2 / n * sum p_t * log(p_t / p_s).
double kl_oracle(const Tensor& t, const Tensor& s, double T) {
  const std::size_t n = t.dim(0), k = t.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pt(k), ps(k);
    double zt = 0.0, zs = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      zt += pt[c] = std::exp(t[i * k + c] / T);
      zs += ps[c] = std::exp(s[i * k + c] / T);
    }
    for (std::size_t c = 0; c < k; ++c) total += pt[c] / zt * std::log((pt[c] / zt) / (ps[c] / zs));
  }
  return T * T / static_cast<double>(n) * total;
}

const std::vector<int> kLabels{0, 2, 1, 2};

}  // namespace

TEST(TemperedSoftmax, TemperatureOneIsPlainSoftmax) {
  std::mt19937_64 rng(1);
  const Tensor z = random_tensor({3, 4}, rng);
  EXPECT_EQ(tempered_softmax(z, 1.0), topokd::nn::softmax(z));
}

TEST(TemperedSoftmax, EqualLogitsAreUniform) {
  for (double T : {0.5, 1.0, 4.0, 20.0}) {
    const auto p = tempered_softmax(Tensor({1, 4}, {3.0, 3.0, 3.0, 3.0}), T);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(p[c], 0.25);
  }
}

TEST(TemperedSoftmax, ScalarCase) {
  const auto p = tempered_softmax(Tensor({1, 2}, {2.0, 0.0}), 2.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
}

TEST(TemperedSoftmax, RowsSumToOneAndArgmaxIsPreserved) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_tensor({4, 5}, rng, 10.0);
    const auto am = topokd::nn::argmax_rows(z);
    for (double T : {0.1, 1.0, 4.0, 100.0}) {
      const auto p = tempered_softmax(z, T);
      EXPECT_EQ(topokd::nn::argmax_rows(p), am);
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) s += p[i * 5 + c];
        EXPECT_NEAR(s, 1.0, 1e-14);
      }
    }
  }
}

TEST(TemperedSoftmax, LargeLogitsStayFinite) {
  const auto p = tempered_softmax(Tensor({1, 2}, {1000.0, -1000.0}), 1.0);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(KDKL, IdenticalLogitsGiveZero) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor z = random_tensor({4, 5}, rng, 3.0);
    EXPECT_EQ(kd_kl_loss(z, z, 4.0).loss, 0.0);
  }
}

TEST(KDKL, TwoClassHandCase) {
  const Tensor t({1, 2}, {std::log(3.0), 0.0});
  const Tensor s({1, 2}, {0.0, 0.0});
  EXPECT_NEAR(kd_kl_loss(t, s, 1.0).loss, 0.75 * std::log(1.5) + 0.25 * std::log(0.5), 1e-15);
  EXPECT_NEAR(kd_kl_loss(t, s, 1.0).loss, 0.13081, 1e-5);
}

TEST(KDKL, MatchesTheOracleAndIsNonNegative) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor t = random_tensor({3, 4}, rng, 2.0), s = random_tensor({3, 4}, rng, 2.0);
    for (double T : {1.0, 2.0, 4.0}) {
      const double v = kd_kl_loss(t, s, T).loss;
      EXPECT_GE(v, 0.0);
      EXPECT_NEAR(v, kl_oracle(t, s, T), 1e-12 * std::max(1.0, v));
    }
  }
}

TEST(KDKL, TemperatureRescalingScalesByTheSquare) {
  // Logits scaled by T'/T see the same tempered distributions at T' as the
  // originals at T, so only the T^2 prefactor changes.
  std::mt19937_64 rng(5);
  const Tensor t = random_tensor({3, 4}, rng), s = random_tensor({3, 4}, rng);
  Tensor t2 = t, s2 = s;
  for (double& v : t2.storage()) v *= 2.0;
  for (double& v : s2.storage()) v *= 2.0;
  const double base = kd_kl_loss(t, s, 2.0).loss, scaled = kd_kl_loss(t2, s2, 4.0).loss;
  EXPECT_NEAR(scaled / base, 4.0, 1e-12);
  EXPECT_NEAR(scaled, kl_oracle(t2, s2, 4.0), 1e-12);
}

TEST(KDKL, GradientAtUnitTemperatureIsProbabilityDifference) {
  std::mt19937_64 rng(6);
  const Tensor t = random_tensor({1, 5}, rng), s = random_tensor({1, 5}, rng);
  const auto g = kd_kl_loss(t, s, 1.0).grad;
  const auto pt = topokd::nn::softmax(t), ps = topokd::nn::softmax(s);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(g[c], ps[c] - pt[c], 1e-15);
}

TEST(KDKL, RejectsShapeMismatch) { EXPECT_THROW(kd_kl_loss(Tensor({2, 3}), Tensor({2, 4}), 1.0), topokd::ShapeError); }

TEST(KDTotal, EndpointsReduceExactly) {
  std::mt19937_64 rng(7);
  const Tensor s = random_tensor({4, 3}, rng), t = random_tensor({4, 3}, rng);
  const auto ce = topokd::nn::cross_entropy(s, kLabels);
  const auto kd = kd_kl_loss(t, s, 4.0);
  const auto at0 = kd_total_loss(s, kLabels, t, 0.0, 4.0);
  const auto at1 = kd_total_loss(s, kLabels, t, 1.0, 4.0);
  EXPECT_EQ(at0.loss, ce.loss);
  EXPECT_EQ(at0.grad, ce.grad);
  EXPECT_EQ(at1.loss, kd.loss);
  EXPECT_EQ(at1.grad, kd.grad);
}

TEST(KDTotal, AffineCombination) {
  const topokd::nn::LossGrad ce{0.2, Tensor({1, 1})}, kd{0.4, Tensor({1, 1})};
  EXPECT_DOUBLE_EQ(topokd::nn::combine(0.5, ce, 0.5, kd).loss, 0.3);
}

TEST(MultiTeacher, EtaEndpointsAndEqualTeachers) {
  std::mt19937_64 rng(8);
  const Tensor s = random_tensor({4, 3}, rng), t1 = random_tensor({4, 3}, rng), t2 = random_tensor({4, 3}, rng);
  const auto k1 = kd_kl_loss(t1, s, 4.0), k2 = kd_kl_loss(t2, s, 4.0);
  EXPECT_EQ(multi_teacher_kd_loss(t1, t2, s, 1.0, 4.0).loss, k1.loss);
  EXPECT_EQ(multi_teacher_kd_loss(t1, t2, s, 1.0, 4.0).grad, k1.grad);
  EXPECT_EQ(multi_teacher_kd_loss(t1, t2, s, 0.0, 4.0).loss, k2.loss);
  EXPECT_EQ(multi_teacher_kd_loss(t1, t2, s, 0.0, 4.0).grad, k2.grad);
  for (double eta : {0.0, 0.3, 0.7, 1.0}) EXPECT_NEAR(multi_teacher_kd_loss(t1, t1, s, eta, 4.0).loss, k1.loss, 1e-15);
  // With eta = 1 the two-teacher total is the single-teacher total.
  EXPECT_EQ(multi_teacher_total_loss(s, kLabels, t1, t2, 0.7, 1.0, 4.0).loss, kd_total_loss(s, kLabels, t1, 0.7, 4.0).loss);
}

TEST(Gradients, EveryLossMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  const Tensor s = random_tensor({4, 3}, rng, 2.0), t1 = random_tensor({4, 3}, rng, 2.0), t2 = random_tensor({4, 3}, rng, 2.0);
  auto check = [&](auto fn) {
    const auto lg = fn(s);
    const auto r = logits_grad_check(s, lg.grad, [&](const Tensor& z) { return fn(z).loss; });
    EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
  };
  check([&](const Tensor& z) { return topokd::nn::cross_entropy(z, kLabels); });
  for (double T : {1.0, 4.0}) {
    check([&](const Tensor& z) { return kd_kl_loss(t1, z, T); });
    check([&](const Tensor& z) { return kd_total_loss(z, kLabels, t1, 0.7, T); });
    check([&](const Tensor& z) { return multi_teacher_kd_loss(t1, t2, z, 0.3, T); });
    check([&](const Tensor& z) { return multi_teacher_total_loss(z, kLabels, t1, t2, 0.7, 0.3, T); });
  }
  std::mt19937_64 mix_rng(10);
  const auto m = topokd::augment::mixup_batch(Tensor({4, 1}), kLabels, {.alpha = 1.0}, mix_rng);
  check([&](const Tensor& z) { return kd_total_loss(z, m, t1, 0.6, 4.0); });
}
