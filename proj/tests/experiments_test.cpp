#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "onorm/errors.hpp"
#include "onorm/experiments.hpp"

namespace onorm {
namespace {

TEST(AngleTest, KnownAngles) {
  const std::vector<double> x{1.0, 0.0};
  const std::vector<double> y{0.0, 2.0};
  const std::vector<double> z{-3.0, 0.0};
  const std::vector<double> d{1.0, 1.0};
  EXPECT_EQ(angle_degrees(x, x), 0.0);
  EXPECT_NEAR(angle_degrees(x, y), 90.0, 1e-12);
  EXPECT_NEAR(angle_degrees(x, z), 180.0, 1e-12);
  EXPECT_NEAR(angle_degrees(x, d), 45.0, 1e-12);
}

BiasConfig small_bias() {
  BiasConfig c;
  c.dataset_size = 256;
  c.batch_sizes = {2, 8, 64, 256};
  c.repetitions = 3;
  c.filters = 4;
  return c;
}

TEST(GradientBiasTest, FullBatchHasZeroAngle) {
  const auto r = gradient_bias_experiment(small_bias());
  EXPECT_EQ(r.entries.back().batch_size, 256u);
  EXPECT_EQ(r.entries.back().mean_angle, 0.0);
}

TEST(GradientBiasTest, SmallBatchesAreMoreBiased) {
  const auto r = gradient_bias_experiment(small_bias());
  EXPECT_GT(r.entries[0].mean_angle, r.entries[2].mean_angle);
  for (const auto& e : r.entries) {
    EXPECT_GE(e.mean_angle, 0.0);
    EXPECT_LE(e.mean_angle, 180.0);
  }
}

TEST(GradientBiasTest, DeterministicForSeed) {
  std::ostringstream a;
  std::ostringstream b;
  write_bias_csv(a, gradient_bias_experiment(small_bias()));
  write_bias_csv(b, gradient_bias_experiment(small_bias()));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "batch_size,mean_angle_deg,std_angle_deg,repetitions");
}

TEST(GradientBiasTest, RejectsInvalidBatchSizes) {
  BiasConfig c = small_bias();
  c.batch_sizes = {1};
  EXPECT_THROW(gradient_bias_experiment(c), std::invalid_argument);
  c.batch_sizes = {3};
  EXPECT_THROW(gradient_bias_experiment(c), std::invalid_argument);
}

GrowthConfig small_growth() {
  GrowthConfig g;
  g.depth = 24;
  g.width = 32;
  g.samples = 128;
  return g;
}

TEST(ActivationGrowthTest, ExactStatisticsKeepUnitRms) {
  GrowthConfig g = small_growth();
  g.noise = 0.0;
  g.sigma_bias = 0.0;
  const auto p = activation_growth_experiment(g);
  for (double r : p.rms) EXPECT_NEAR(r, 1.0, 1e-9);
}

TEST(ActivationGrowthTest, LayerScalingGivesUnitRmsExactly) {
  GrowthConfig g = small_growth();
  g.noise = 0.0;
  g.sigma_bias = 0.0;
  g.layer_scaling = true;
  for (double r : activation_growth_experiment(g).rms) EXPECT_NEAR(r, 1.0, 1e-12);
}

TEST(ActivationGrowthTest, UnderestimatedScaleGrowsWithoutLayerScaling) {
  const auto p = activation_growth_experiment(small_growth());
  EXPECT_GT(p.log_slope, 0.01);
  EXPECT_GT(p.rms.back(), p.rms.front());
}

TEST(ActivationGrowthTest, LayerScalingBoundsGrowth) {
  GrowthConfig g = small_growth();
  g.layer_scaling = true;
  const auto p = activation_growth_experiment(g);
  const auto [lo, hi] = std::minmax_element(p.rms.begin(), p.rms.end());
  EXPECT_LT(*hi / *lo, 10.0);
}

TEST(ActivationGrowthTest, CsvHasOneRowPerLayer) {
  GrowthConfig g = small_growth();
  g.depth = 3;
  const auto a = activation_growth_experiment(g);
  g.layer_scaling = true;
  const auto b = activation_growth_experiment(g);
  std::ostringstream out;
  write_growth_csv(out, a, b);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(EquilibriumTest, PureDecayIsGeometric) {
  EquilibriumConfig c;
  c.steps = 100;
  c.zero_gradient = true;
  const auto r = equilibrium_experiment(c);
  for (std::size_t t = 1; t < r.weight_norm.size(); ++t) {
    ASSERT_NEAR(r.weight_norm[t] / r.weight_norm[t - 1], 1.0 - c.eta * c.lambda, 1e-12);
  }
  EXPECT_EQ(r.ratio, 0.0);
}

TEST(EquilibriumTest, RatioNearOneAtEquilibrium) {
  EquilibriumConfig c;
  c.steps = 8000;
  c.lambda = 3e-3;
  const auto r = equilibrium_experiment(c);
  EXPECT_GT(r.ratio, 0.8);
  EXPECT_LT(r.ratio, 1.25);
}

// With the gradient norm inversely proportional to the weight norm the
// equilibrium norm scales as eta^(1/4).
TEST(EquilibriumTest, DoublingLearningRateScalesNormByFourthRootOfTwo) {
  EquilibriumConfig c;
  c.steps = 8000;
  c.lambda = 3e-3;
  const double w1 = equilibrium_experiment(c).mean_weight_norm;
  c.eta *= 2.0;
  const double w2 = equilibrium_experiment(c).mean_weight_norm;
  EXPECT_GT(w2 / w1, 1.1);
  EXPECT_LT(w2 / w1, 1.3);
}

TEST(EquilibriumTest, DivergenceIsReported) {
  EquilibriumConfig c;
  c.steps = 200;
  c.eta = 1e200;
  c.lambda = 1e200;
  EXPECT_THROW(equilibrium_experiment(c), DivergenceError);
}

SweepConfig small_sweep() {
  SweepConfig s;
  s.alpha_f = {0.9, 0.999};
  s.alpha_b = {0.9, 0.99};
  s.data.samples = 600;
  s.train.epochs = 1;
  s.hidden = 8;
  return s;
}

TEST(DecaySweepTest, SingleCellMatchesSingleRun) {
  SweepConfig s = small_sweep();
  s.alpha_f = {0.99};
  s.alpha_b = {0.9};
  const auto cells = decay_sweep(s);
  ASSERT_EQ(cells.size(), 1u);

  const Dataset data = generate_dataset(s.data, mix_seed(s.train.seed, 1));
  Rng split_rng = Rng(s.train.seed).split(2);
  const auto [tr, va] = split_dataset(data, s.holdout, split_rng);
  Rng init = Rng(s.train.seed).split(3);
  NormSpec ns;
  ns.alpha_f = 0.99;
  ns.alpha_b = 0.9;
  Network net = make_mlp(tr.input_size(), s.hidden, data.classes, ns, init);
  TrainConfig tc = s.train;
  tc.alpha_f = 0.99;
  tc.alpha_b = 0.9;
  EXPECT_EQ(cells[0].loss, train(tc, net, tr, va).records.back().loss);
}

TEST(DecaySweepTest, DeterministicSurface) {
  std::ostringstream a;
  std::ostringstream b;
  write_sweep_csv(a, decay_sweep(small_sweep()));
  write_sweep_csv(b, decay_sweep(small_sweep()));
  EXPECT_EQ(a.str(), b.str());
}

TEST(DecaySweepTest, RejectsBadGrid) {
  SweepConfig s = small_sweep();
  s.alpha_f = {1.5};
  EXPECT_THROW(decay_sweep(s), std::invalid_argument);
  s.alpha_f = {};
  EXPECT_THROW(decay_sweep(s), std::invalid_argument);
}

}  // namespace
}  // namespace onorm
