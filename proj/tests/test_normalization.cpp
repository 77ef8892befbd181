#include "test_support.hpp"

#include "spikereg/network.hpp"
#include "spikereg/normalization.hpp"

using namespace spikereg;
using namespace spikereg::testing;

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  auto bn = BatchNormState<double>::create(2);
  auto y = batch_norm_forward(bn, T64::full({4, 2, 3, 3}, 3.7));
  EXPECT_LT(y.values().abs().maxCoeff(), 1e-9);
}

TEST(BatchNorm, MeanOnlyTwoValues) {
  auto bn = BatchNormState<double>::create(1, NormVariant::mean_only);
  auto y = batch_norm_forward(bn, T64({2, 1}, {1, 3}));
  EXPECT_EQ(y[0], -1);
  EXPECT_EQ(y[1], 1);
}

TEST(BatchNorm, TrainModeNeedsTwoSamples) {
  auto bn = BatchNormState<double>::create(3);
  EXPECT_THROW(batch_norm_forward(bn, T64::ones({1, 3, 2, 2})), UsageError);
  bn.training = false;
  EXPECT_NO_THROW(batch_norm_forward(bn, T64::ones({1, 3, 2, 2})));
  EXPECT_THROW(batch_norm_forward(bn, T64::ones({2, 4})), ConfigurationError);
}

TEST(BatchNorm, FullOutputHasMeanBetaStdGamma) {
  std::mt19937_64 rng(1);
  auto bn = BatchNormState<double>::create(3);
  bn.gamma.mutable_values() << 0.5, 2.0, 1.5;
  bn.beta.mutable_values() << -1.0, 0.25, 3.0;
  auto y = batch_norm_forward(bn, random_tensor({6, 3, 4, 4}, rng, false, -2, 5));
  auto [mu, sd] = channel_statistics(y);
  for (Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(mu[c], bn.beta[c], 1e-9);
    EXPECT_NEAR(sd[c], bn.gamma[c], 1e-4);  // eps inside the square root
  }
}

TEST(BatchNorm, MeanOnlyOutputMeanIsBeta) {
  std::mt19937_64 rng(2);
  auto bn = BatchNormState<double>::create(4, NormVariant::mean_only);
  bn.beta.mutable_values() << 0.1, -0.7, 2.0, 0.0;
  bn.gamma.mutable_values() << 1.0, 3.0, 0.5, 2.0;
  auto y = batch_norm_forward(bn, random_tensor({5, 4, 3, 3}, rng, false, -3, 3));
  auto [mu, sd] = channel_statistics(y);
  for (Index c = 0; c < 4; ++c) EXPECT_NEAR(mu[c], bn.beta[c], 1e-6);
}

TEST(BatchNorm, MeanOnlyCentersInputGradients) {
  std::mt19937_64 rng(3);
  auto bn = BatchNormState<double>::create(3, NormVariant::mean_only);
  bn.gamma.mutable_values() << 2.0, -0.5, 1.0;
  T64 x = random_tensor({4, 3, 2, 2}, rng);
  T64 probe = random_tensor({4, 3, 2, 2}, rng, false);
  backward(sum(mul(batch_norm_forward(bn, x), probe)));
  T64 dx(x.shape(), x.grad());
  auto [mu, sd] = channel_statistics(dx);
  for (Index c = 0; c < 3; ++c) EXPECT_NEAR(mu[c], 0.0, 1e-6);
}

TEST(BatchNorm, RunningStatisticsUseUnbiasedVariance) {
  auto bn = BatchNormState<double>::create(1);
  batch_norm_forward(bn, T64({4, 1}, {1, 2, 3, 4}));
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (NormVariant variant : {NormVariant::full, NormVariant::mean_only}) {
    for (bool training : {true, false}) {
      auto bn = BatchNormState<double>::create(3, variant);
      bn.training = training;
      bn.gamma = random_tensor({3}, rng);
      bn.beta = random_tensor({3}, rng);
      bn.running_var << 0.5, 1.5, 2.0;
      T64 x = random_tensor({4, 3, 2, 2}, rng);
      T64 probe = random_tensor({4, 3, 2, 2}, rng, false);
      // Each evaluation would otherwise move the running statistics.
      const BatchNormState<double> frozen = bn;
      auto loss = [&] {
        auto state = frozen;
        state.gamma = bn.gamma;
        state.beta = bn.beta;
        return sum(mul(square(batch_norm_forward(state, x)), probe));
      };
      EXPECT_LT(check_gradients(loss, {x, bn.gamma, bn.beta}).max_error, 1e-4);
    }
  }
}

TEST(BatchNorm, EvalOutputTracksTrainOutputAfterWarmup) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist(1.5, 2.0);
  auto draw = [&] {
    Buffer<double> v(64 * 2 * 4);
    for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
    return T64({64, 2, 2, 2}, std::move(v));
  };
  auto bn = BatchNormState<double>::create(2);
  for (int i = 0; i < 200; ++i) batch_norm_forward(bn, draw());
  T64 fresh = draw();
  auto train_out = batch_norm_forward(bn, fresh);
  bn.training = false;
  auto eval_out = batch_norm_forward(bn, fresh);
  EXPECT_LT((train_out.values() - eval_out.values()).abs().mean(), 1e-1);
  auto [mu, sd] = channel_statistics(eval_out);
  for (Index c = 0; c < 2; ++c) {
    EXPECT_NEAR(mu[c], 0.0, 0.25);
    EXPECT_NEAR(sd[c], 1.0, 0.15);
  }
}

TEST(WeightNorm, Examples) {
  WeightNormParam<double> p{T64({1, 2}, {3, 4}, true), T64({1}, {10}, true)};
  auto w = weight_normalize(p);
  EXPECT_NEAR(w[0], 6, 1e-15);
  EXPECT_NEAR(w[1], 8, 1e-15);
  WeightNormParam<double> q{T64({1, 2}, {1, 0}), T64({1}, {1})};
  auto u = weight_normalize(q);
  EXPECT_EQ(u[0], 1);
  EXPECT_EQ(u[1], 0);
}

TEST(WeightNorm, ScaleInvariance) {
  std::mt19937_64 rng(6);
  T64 v = random_tensor({4, 3, 3, 3}, rng), g = random_tensor({4}, rng);
  const auto w = weight_normalize(WeightNormParam<double>{v, g}).values();
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    T64 scaled(v.shape(), v.values() * c);
    EXPECT_LT(max_abs_diff(weight_normalize(WeightNormParam<double>{scaled, g}).values(), w), 1e-6);
  }
}

TEST(WeightNorm, DirectionGradientIsOrthogonalToWeight) {
  std::mt19937_64 rng(7);
  T64 v = random_tensor({5, 2, 3, 3}, rng), g = random_tensor({5}, rng, true, 0.5, 2.0);
  T64 probe = random_tensor({5, 2, 3, 3}, rng, false);
  T64 w = weight_normalize(WeightNormParam<double>{v, g});
  const Buffer<double> wv = w.values();
  backward(sum(mul(square(w), probe)));
  const Index cols = 18;
  for (Index c = 0; c < 5; ++c) {
    const double dot = (v.grad().segment(c * cols, cols) * wv.segment(c * cols, cols)).sum();
    const double scale = v.grad().segment(c * cols, cols).matrix().norm() * wv.segment(c * cols, cols).matrix().norm();
    EXPECT_LT(std::abs(dot), 1e-5 * std::max(scale, 1e-300)) << "channel " << c;
  }
}

TEST(WeightNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  T64 v = random_tensor({3, 4}, rng), g = random_tensor({3}, rng);
  T64 probe = random_tensor({3, 4}, rng, false);
  auto loss = [&] { return sum(mul(square(weight_normalize(WeightNormParam<double>{v, g})), probe)); };
  EXPECT_LT(check_gradients(loss, {v, g}).max_error, 1e-4);
}

TEST(WeightNorm, VanishingDirectionNamesChannel) {
  WeightNormParam<double> p{T64({3, 2}, {1, 1, 0, 0, 2, 2}), T64::ones({3})};
  try {
    weight_normalize(p);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("channel 1"), std::string::npos) << e.what();
  }
}

TEST(WeightNorm, FromWeightStartsAtIdentity) {
  std::mt19937_64 rng(9);
  T64 v = random_tensor({4, 6}, rng);
  auto p = WeightNormParam<double>::from_weight(v);
  EXPECT_LT(max_abs_diff(weight_normalize(p).values(), v.values()), 1e-14);
}

TEST(DataDependentInit, TargetArithmetic) {
  // One channel with values {-1, 1}: mean 0, std 1.
  auto [g0, b0] = data_dependent_targets(T64({2, 1}, {-1, 1}));
  EXPECT_DOUBLE_EQ(g0[0], 1.0);
  EXPECT_DOUBLE_EQ(b0[0], 0.0);
  // {-2, 6}: mean 2, std 4.
  auto [g, b] = data_dependent_targets(T64({2, 1}, {-2, 6}));
  EXPECT_DOUBLE_EQ(g[0], 0.25);
  EXPECT_DOUBLE_EQ(b[0], -0.5);
}

TEST(DataDependentInit, DegenerateChannelIsError) {
  EXPECT_THROW(data_dependent_targets(T64({3, 2}, {1, 5, 1, 6, 1, 7})), NumericalError);
}

TEST(DataDependentInit, LayersStartAtZeroMeanUnitStd) {
  std::mt19937_64 rng(10);
  std::vector<LayerPtr<double>> layers;
  layers.push_back(std::make_unique<Conv2d<double>>(Conv2d<double>::Options{3, 6, 3, 1, 1, 1, true, true}, rng));
  layers.push_back(std::make_unique<IFNeuron<double>>());
  layers.push_back(std::make_unique<Conv2d<double>>(Conv2d<double>::Options{6, 4, 3, 1, 1, 1, true, true}, rng));
  layers.push_back(std::make_unique<Flatten<double>>());
  layers.push_back(std::make_unique<Linear<double>>(4 * 5 * 5, 5, true, rng));
  LayerStack<double> stack(std::move(layers));
  T64 batch = random_tensor({2, 16, 3, 5, 5}, rng, false, -1.0, 3.0);
  stack.data_dependent_init(batch);

  // Pre-activations of every weight-normed layer, read back layer by layer.
  ForwardContext<double> ctx;
  ctx.time_steps = 2;
  NoGradGuard guard;
  T64 h = reshape(batch, {32, 3, 5, 5});
  for (Layer<double>* layer : stack.leaves()) {
    h = layer->forward(h, ctx);
    if (!layer->weight_normalized()) continue;
    auto [mu, sd] = channel_statistics(h);
    for (Index c = 0; c < mu.size(); ++c) {
      EXPECT_NEAR(mu[c], 0.0, 1e-4) << layer->kind();
      EXPECT_NEAR(sd[c], 1.0, 1e-4) << layer->kind();
    }
  }
}

TEST(DataDependentInit, RequiresWeightNormalizedLayers) {
  std::mt19937_64 rng(11);
  std::vector<LayerPtr<double>> layers;
  layers.push_back(std::make_unique<Linear<double>>(4, 2, false, rng));
  LayerStack<double> stack(std::move(layers));
  EXPECT_THROW(stack.data_dependent_init(T64::ones({1, 2, 4})), UsageError);
}
