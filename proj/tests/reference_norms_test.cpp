#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "onorm/reference_norms.hpp"
#include "test_support.hpp"

namespace onorm {
namespace {

using testing::linear_loss;
using testing::numeric_gradient;
using testing::random_vector;
using testing::relative_error;

// Plain two-pass normalization, independent of the library path.
std::vector<double> normalize_oracle(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / n);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / sigma;
  return y;
}

TEST(ExactNormalizeTest, PairBecomesPlusMinusOne) {
  const std::vector<double> x{0.3, 0.7};
  const auto r = exact_normalize(x);
  EXPECT_EQ(r.y, (std::vector<double>{-1.0, 1.0}));
}

TEST(ExactNormalizeTest, SymmetricInputIsFixed) {
  const std::vector<double> x{-1.0, 1.0, -1.0, 1.0};
  EXPECT_EQ(exact_normalize(x).y, x);
}

TEST(ExactNormalizeTest, ErrorsForTinyOrConstantInputs) {
  EXPECT_THROW(exact_normalize(std::vector<double>{1.0}), ShapeError);
  EXPECT_THROW(exact_normalize(std::vector<double>{2.0, 2.0, 2.0}), NumericError);
}

TEST(ExactNormalizeTest, PropertyZeroMeanUnitVariance) {
  Rng rng(81);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(60);
    const auto x = random_vector(rng, n, rng.uniform(0.1, 10.0));
    const auto r = exact_normalize(x);
    double s = 0.0;
    double ss = 0.0;
    for (double v : r.y) {
      s += v;
      ss += v * v;
    }
    ASSERT_NEAR(s, 0.0, 1e-9);
    ASSERT_NEAR(ss, static_cast<double>(n), 1e-9);
    ASSERT_LE(relative_error(r.y, normalize_oracle(x)), 1e-12);
  }
}

TEST(ExactBackwardTest, AnnihilatesOutputAndConstantDirections) {
  Rng rng(82);
  for (std::size_t n : {3u, 7u, 20u}) {
    const auto r = exact_normalize(random_vector(rng, n));
    std::vector<double> gy = r.y;
    for (auto& v : gy) v *= 3.7;
    for (double v : exact_backward(r.y, gy, r.sigma)) EXPECT_NEAR(v, 0.0, 1e-12);
    const std::vector<double> ones(n, -1.3);
    for (double v : exact_backward(r.y, ones, r.sigma)) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(ExactBackwardTest, PairGradientIsZero) {
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = exact_normalize(random_vector(rng, 2));
    for (double v : exact_backward(r.y, random_vector(rng, 2), r.sigma)) EXPECT_EQ(v, 0.0);
  }
}

TEST(ExactBackwardTest, MatchesFiniteDifferences) {
  Rng rng(84);
  for (std::size_t n : {2u, 3u, 10u, 20u, 50u}) {
    const auto x = random_vector(rng, n);
    const auto w = random_vector(rng, n);
    const auto fd = numeric_gradient([&](const std::vector<double>& v) { return linear_loss(normalize_oracle(v), w); }, x);
    const auto r = exact_normalize(x);
    const auto an = exact_backward(r.y, w, r.sigma);
    EXPECT_LE(relative_error(an, fd, 1e-8), 1e-6) << "n=" << n;
  }
}

TEST(ExactBackwardTest, ProjectionFactorization) {
  Rng rng(85);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.index(30);
    const auto r = exact_normalize(random_vector(rng, n));
    const auto g = random_vector(rng, n);
    const std::vector<double> ones(n, 1.0);
    auto expect = reject_from(reject_from(g, r.y), ones);
    auto other_order = reject_from(reject_from(g, ones), r.y);
    for (std::size_t i = 0; i < n; ++i) {
      expect[i] /= r.sigma;
      other_order[i] /= r.sigma;
    }
    const auto got = exact_backward(r.y, g, r.sigma);
    ASSERT_LE(relative_error(got, expect), 1e-10);
    ASSERT_LE(relative_error(got, other_order), 1e-10);
    ASSERT_NEAR(std::accumulate(got.begin(), got.end(), 0.0), 0.0, 1e-10);
    ASSERT_NEAR(dot(got, r.y), 0.0, 1e-10);
  }
}

TEST(JacobianTest, RowsSumToZeroAndMatchBackward) {
  Rng rng(86);
  for (std::size_t n : {3u, 8u, 25u}) {
    const auto x = random_vector(rng, n);
    const Matrix j = jacobian_dense(x);
    const auto r = exact_normalize(x);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += j(i, k);
      EXPECT_NEAR(s, 0.0, 1e-12);
    }
    const auto g = random_vector(rng, n);
    EXPECT_LE(relative_error(matvec_transposed(j, g), exact_backward(r.y, g, r.sigma)), 1e-12);
  }
}

TEST(JacobianTest, MatchesNumericalJacobian) {
  Rng rng(87);
  const std::size_t n = 6;
  const auto x = random_vector(rng, n);
  const Matrix j = jacobian_dense(x);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> e(n, 0.0);
    e[i] = 1.0;
    const auto row = numeric_gradient([&](const std::vector<double>& v) { return linear_loss(normalize_oracle(v), e); }, x);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(j(i, k), row[k], 1e-6);
  }
}

TEST(RejectFromTest, ResultIsOrthogonal) {
  Rng rng(88);
  const auto v = random_vector(rng, 9);
  const auto d = random_vector(rng, 9);
  EXPECT_NEAR(dot(reject_from(v, d), d), 0.0, 1e-12);
  const std::vector<double> zero(9, 0.0);
  EXPECT_EQ(reject_from(v, zero), v);
}

std::vector<FeatureMap> split_batch(const std::vector<double>& flat, std::size_t batch, std::size_t f, std::size_t s) {
  std::vector<FeatureMap> out;
  for (std::size_t b = 0; b < batch; ++b) {
    out.emplace_back(f, s, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(b * f * s),
                                               flat.begin() + static_cast<std::ptrdiff_t>((b + 1) * f * s)));
  }
  return out;
}

std::vector<double> flatten(const std::vector<FeatureMap>& maps) {
  std::vector<double> out;
  for (const auto& m : maps) out.insert(out.end(), m.data().begin(), m.data().end());
  return out;
}

TEST(BatchNormTest, BatchOfTwoIsDegenerate) {
  BatchNorm bn(3);
  Rng rng(91);
  const std::vector<FeatureMap> batch{testing::random_map(rng, 3, 1), testing::random_map(rng, 3, 1)};
  const auto y = bn.forward(batch);
  for (std::size_t f = 0; f < 3; ++f) {
    EXPECT_EQ(std::abs(y[0](f, 0)), 1.0);
    EXPECT_EQ(y[1](f, 0), -y[0](f, 0));
  }
  const auto g = bn.backward({testing::random_map(rng, 3, 1), testing::random_map(rng, 3, 1)});
  for (const auto& m : g) {
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(BatchNormTest, RejectsBatchOfOne) {
  BatchNorm bn(1);
  EXPECT_THROW(bn.forward({FeatureMap(1, 1, {1.0})}), std::invalid_argument);
}

TEST(BatchNormTest, MatchesFiniteDifferences) {
  Rng rng(92);
  const std::size_t batch = 4;
  const std::size_t f = 2;
  const std::size_t s = 3;
  const auto x = random_vector(rng, batch * f * s);
  const auto w = random_vector(rng, batch * f * s);
  auto loss = [&](const std::vector<double>& v) {
    BatchNorm probe(f);
    return linear_loss(flatten(probe.forward(split_batch(v, batch, f, s))), w);
  };
  const auto fd = numeric_gradient(loss, x);
  BatchNorm bn(f);
  bn.forward(split_batch(x, batch, f, s));
  const auto an = flatten(bn.backward(split_batch(w, batch, f, s)));
  EXPECT_LE(relative_error(an, fd), 1e-6);
}

TEST(BatchNormTest, StatisticsSpanBatchAndSpatialExtent) {
  BatchNorm bn(1);
  const auto y = bn.forward({FeatureMap(1, 2, {1.0, 2.0}), FeatureMap(1, 2, {3.0, 4.0})});
  const auto oracle = normalize_oracle({1.0, 2.0, 3.0, 4.0});
  EXPECT_NEAR(y[0](0, 0), oracle[0], 1e-12);
  EXPECT_NEAR(y[1](0, 1), oracle[3], 1e-12);
}

TEST(BatchNormTest, ConstantFeatureUsesFloor) {
  BatchNorm bn(1);
  const auto y = bn.forward({FeatureMap(1, 1, {2.0}), FeatureMap(1, 1, {2.0}), FeatureMap(1, 1, {2.0})});
  for (const auto& m : y) EXPECT_EQ(m(0, 0), 0.0);
  const auto g = bn.backward({FeatureMap(1, 1, {1.0}), FeatureMap(1, 1, {2.0}), FeatureMap(1, 1, {3.0})});
  EXPECT_DOUBLE_EQ(g[0](0, 0), -1.0 / kSigmaFloor);
}

TEST(BatchNormTest, RunningStatisticsAndInference) {
  BatchNorm bn(1, 0.5);
  bn.forward({FeatureMap(1, 1, {1.0}), FeatureMap(1, 1, {3.0})});
  EXPECT_DOUBLE_EQ(bn.running_mean()[0], 1.0);
  EXPECT_DOUBLE_EQ(bn.running_var()[0], 1.0);
  EXPECT_DOUBLE_EQ(bn.infer(FeatureMap(1, 1, {3.0}))(0, 0), 2.0);
}

TEST(BatchNormTest, BackwardWithoutForwardThrows) {
  BatchNorm bn(1);
  EXPECT_THROW(bn.backward({FeatureMap(1, 1), FeatureMap(1, 1)}), StateError);
}

TEST(LayerNormTest, NormalizesEachSampleAcrossFeatures) {
  LayerNorm ln;
  const auto y = ln.forward({FeatureMap(2, 2, {1.0, 2.0, 3.0, 4.0}), FeatureMap(4, 1, {0.0, 0.0, 1.0, 1.0})});
  const auto oracle = normalize_oracle({1.0, 2.0, 3.0, 4.0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[0].data()[i], oracle[i], 1e-12);
  EXPECT_EQ(y[1], FeatureMap(4, 1, {-1.0, -1.0, 1.0, 1.0}));
}

TEST(LayerNormTest, MatchesFiniteDifferences) {
  Rng rng(93);
  const auto x = random_vector(rng, 12);
  const auto w = random_vector(rng, 12);
  const auto fd = numeric_gradient([&](const std::vector<double>& v) { return linear_loss(normalize_oracle(v), w); }, x);
  LayerNorm ln;
  ln.forward({FeatureMap(3, 4, x)});
  const auto g = ln.backward({FeatureMap(3, 4, w)});
  EXPECT_LE(relative_error(g[0].values(), fd), 1e-6);
}

TEST(LayerNormTest, SingleElementSampleThrows) {
  LayerNorm ln;
  EXPECT_THROW(ln.forward({FeatureMap(1, 1, {1.0})}), ShapeError);
}

}  // namespace
}  // namespace onorm
