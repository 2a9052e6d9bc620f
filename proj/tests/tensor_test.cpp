#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <limits>

#include "onorm/tensor.hpp"
#include "test_support.hpp"

namespace onorm {
namespace {

using testing::random_map;
using testing::random_vector;

TEST(FeatureMapTest, RejectsWrongLength) {
  EXPECT_THROW(FeatureMap(2, 3, std::vector<double>(5, 0.0)), ShapeError);
}

TEST(FeatureMapTest, RejectsNonFinite) {
  EXPECT_THROW(FeatureMap(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  EXPECT_THROW(FeatureMap(1, 1, {std::numeric_limits<double>::infinity()}), NumericError);
}

TEST(FeatureMapTest, FeatureMajorLayout) {
  FeatureMap m(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_EQ(m.feature(0)[2], 3.0);
  EXPECT_EQ(m.feature(1).size(), 3u);
}

TEST(FeatureMeanTest, ArithmeticMean) {
  FeatureMap m(1, 4, {1, 2, 3, 4});
  EXPECT_EQ(feature_mean(m), std::vector<double>{2.5});
}

TEST(FeatureMeanTest, FullyConnectedPassesValuesThrough) {
  FeatureMap m(2, 1, {-0.75, 3.25});
  EXPECT_EQ(feature_mean(m), (std::vector<double>{-0.75, 3.25}));
}

TEST(FeatureMeanTest, MatchesSummationOracle) {
  Rng rng(11);
  const FeatureMap m = random_map(rng, 2, 3);
  const auto got = feature_mean(m);
  for (std::size_t f = 0; f < 2; ++f) {
    long double s = 0;
    for (std::size_t i = 0; i < 3; ++i) s += m(f, i);
    EXPECT_NEAR(got[f], static_cast<double>(s / 3), 1e-12);
  }
}

TEST(FeatureVarTest, ZeroForFullyConnected) {
  FeatureMap m(3, 1, {5, -2, 7});
  EXPECT_EQ(feature_var(m), (std::vector<double>{0, 0, 0}));
}

TEST(FeatureVarTest, ZeroForConstant) {
  FeatureMap m(1, 4, {1, 1, 1, 1});
  EXPECT_EQ(feature_var(m), std::vector<double>{0.0});
}

TEST(FeatureVarTest, MatchesTwoPassOracle) {
  Rng rng(12);
  const FeatureMap m = random_map(rng, 3, 17, 2.0);
  const auto got = feature_var(m);
  for (std::size_t f = 0; f < 3; ++f) {
    long double s = 0;
    for (std::size_t i = 0; i < 17; ++i) s += m(f, i);
    const long double mu = s / 17;
    long double ss = 0;
    for (std::size_t i = 0; i < 17; ++i) ss += (m(f, i) - mu) * (m(f, i) - mu);
    EXPECT_NEAR(got[f], static_cast<double>(ss / 17), 1e-12);
  }
}

// var(m) == mean(m*m) - mean(m)^2 for bounded inputs, over random shapes.
TEST(FeatureVarTest, PropertyMomentIdentity) {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t features = 1 + rng.index(6);
    const std::size_t spatial = 1 + rng.index(20);
    std::vector<double> data(features * spatial);
    for (auto& v : data) v = rng.uniform(-10.0, 10.0);
    const FeatureMap m(features, spatial, data);
    std::vector<double> sq(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) sq[i] = data[i] * data[i];
    const auto var = feature_var(m);
    const auto mu = feature_mean(m);
    const auto mu2 = feature_mean(FeatureMap(features, spatial, sq));
    for (std::size_t f = 0; f < features; ++f) {
      ASSERT_NEAR(var[f], mu2[f] - mu[f] * mu[f], 1e-10) << "trial " << trial;
    }
  }
}

TEST(ReductionTest, RepeatCallsAreBitIdentical) {
  Rng rng(14);
  const FeatureMap m = random_map(rng, 64, 300);
  EXPECT_EQ(feature_mean(m), feature_mean(m));
  EXPECT_EQ(feature_var(m), feature_var(m));
}

TEST(ReductionTest, ParallelMatchesSerialBitForBit) {
  Rng rng(15);
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  const FeatureMap m = random_map(rng, 128, 257);
  EXPECT_EQ(feature_mean(m), serial::feature_mean(m));
  EXPECT_EQ(feature_var(m), serial::feature_var(m));
  const Matrix a(200, 150, random_vector(rng, 200 * 150));
  const Matrix b(150, 90, random_vector(rng, 150 * 90));
  EXPECT_EQ(matmul(a, b), serial::matmul(a, b));
  const auto x = random_vector(rng, 150);
  EXPECT_EQ(matvec(a, x), serial::matvec(a, x));
  const auto y = random_vector(rng, 200);
  EXPECT_EQ(matvec_transposed(a, y), serial::matvec_transposed(a, y));
  omp_set_num_threads(saved);
}

TEST(ElementwiseTest, Relu) {
  const std::vector<double> in{-1, 0, 2};
  EXPECT_EQ(relu(in), (std::vector<double>{0, 0, 2}));
}

TEST(ElementwiseTest, ReluBackwardMasksNonPositive) {
  const std::vector<double> pre{-1, 0, 2};
  const std::vector<double> g{5, 6, 7};
  EXPECT_EQ(relu_backward(pre, g), (std::vector<double>{0, 0, 7}));
}

TEST(ElementwiseTest, DotEqualsSquaredNorm) {
  Rng rng(16);
  const auto v = random_vector(rng, 33);
  const double n = l2_norm(v);
  EXPECT_NEAR(dot(v, v), n * n, 1e-12 * dot(v, v));
}

TEST(ElementwiseTest, ShapeMismatchThrows) {
  const std::vector<double> a{1, 2};
  const std::vector<double> b{1, 2, 3};
  EXPECT_THROW(dot(a, b), ShapeError);
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(relu_backward(a, b), ShapeError);
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  EXPECT_THROW(matvec(Matrix(2, 3), a), ShapeError);
}

TEST(MatmulTest, MatchesNaiveTripleLoop) {
  Rng rng(17);
  const Matrix a(5, 7, random_vector(rng, 35));
  const Matrix b(7, 3, random_vector(rng, 21));
  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
}

TEST(RngTest, SameSeedSameStream) {
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.normal(), b.normal());
    ASSERT_EQ(a.uniform(), b.uniform());
  }
}

TEST(RngTest, SplitStreamsDiffer) {
  const Rng base(5);
  Rng s0 = base.split(0);
  Rng s1 = base.split(1);
  EXPECT_NE(s0.uniform(), s1.uniform());
  Rng again = base.split(0);
  Rng s0b = Rng(5).split(0);
  EXPECT_EQ(again.uniform(), s0b.uniform());
}

}  // namespace
}  // namespace onorm
