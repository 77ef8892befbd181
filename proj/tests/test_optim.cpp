#include "test_support.hpp"

#include "spikereg/optim.hpp"

using namespace spikereg;
using namespace spikereg::testing;

namespace {

Parameter<double> scalar_param(double w, double grad, ParamRole role = ParamRole::weight) {
  T64 t({1}, {w}, true);
  t.mutable_grad()[0] = grad;
  return {"w", t, role};
}

OptimizerConfig sgd(double lr, double momentum, double decay) {
  OptimizerConfig c;
  c.lr = lr;
  c.momentum = momentum;
  c.weight_decay = decay;
  return c;
}

}  // namespace

TEST(Sgd, MomentumRecurrence) {
  auto p = scalar_param(1.0, 0.5);
  Optimizer<double> opt(sgd(0.1, 0.9, 0.0), {p});
  opt.step();
  EXPECT_NEAR(opt.state()[0].second[0], 0.5, 1e-15);
  EXPECT_NEAR(p.tensor.item(), 0.95, 1e-15);
  opt.step();
  EXPECT_NEAR(opt.state()[0].second[0], 0.95, 1e-15);
  EXPECT_NEAR(p.tensor.item(), 0.855, 1e-15);
}

TEST(Sgd, PureDecay) {
  auto p = scalar_param(1.0, 0.0);
  Optimizer<double> opt(sgd(0.1, 0.0, 0.1), {p});
  opt.step();
  EXPECT_NEAR(p.tensor.item(), 0.99, 1e-15);
}

TEST(Sgd, DecaySkipsBiasesAndNormAffines) {
  auto b = scalar_param(1.0, 0.0, ParamRole::bias);
  auto g = scalar_param(1.0, 0.0, ParamRole::norm_affine);
  Optimizer<double> opt(sgd(0.1, 0.0, 0.1), {b, g});
  opt.step();
  EXPECT_EQ(b.tensor.item(), 1.0);
  EXPECT_EQ(g.tensor.item(), 1.0);
}

TEST(Sgd, NoMomentumNoDecayIsGradientDescent) {
  std::mt19937_64 rng(1);
  T64 w = random_tensor({4, 3}, rng);
  w.mutable_grad() = random_tensor({4, 3}, rng, false).values();
  const Buffer<double> expected = w.values() - 0.37 * w.grad();
  Optimizer<double> opt(sgd(0.37, 0.0, 0.0), {{"w", w, ParamRole::weight}});
  opt.step();
  EXPECT_TRUE((w.values() == expected).all());
}

TEST(Sgd, MissingGradientNamesParameter) {
  T64 w({2}, {1, 2}, true);
  Optimizer<double> opt(sgd(0.1, 0.9, 0.0), {{"layer.3.weight", w, ParamRole::weight}});
  try {
    opt.step();
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.3.weight"), std::string::npos);
  }
}

TEST(AdamW, DecayOnlyStep) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adamw;
  c.lr = 0.01;
  c.weight_decay = 0.03;
  auto p = scalar_param(1.0, 0.0);
  Optimizer<double> opt(c, {p});
  opt.step();
  EXPECT_NEAR(p.tensor.item(), 0.9997, 1e-15);
}

TEST(AdamW, DecayIsDecoupledFromGradientScale) {
  // Scaling the gradient leaves the Adam direction unchanged, so with
  // decoupled decay the trajectory is unchanged too; an L2 term folded into
  // the gradient would not be.
  auto run = [](double grad_scale) {
    OptimizerConfig c;
    c.kind = OptimizerKind::adamw;
    c.lr = 0.01;
    c.weight_decay = 0.1;
    c.eps = 1e-30;
    auto p = scalar_param(2.0, 0.0);
    Optimizer<double> opt(c, {p});
    for (int i = 0; i < 10; ++i) {
      p.tensor.mutable_grad()[0] = grad_scale * (0.3 + 0.1 * i);
      opt.step();
    }
    return p.tensor.item();
  };
  EXPECT_NEAR(run(1.0), run(1000.0), 1e-12);
}

TEST(AdamW, UpdateMagnitudeBound) {
  std::mt19937_64 rng(2);
  OptimizerConfig c;
  c.kind = OptimizerKind::adamw;
  c.lr = 0.01;
  c.weight_decay = 0.05;
  T64 w = random_tensor({50}, rng);
  Optimizer<double> opt(c, {{"w", w, ParamRole::weight}});
  for (int step = 1; step <= 20; ++step) {
    w.mutable_grad() = random_tensor({50}, rng, false, -5, 5).values();
    const Buffer<double> before = w.values();
    opt.step();
    // |m_hat| / sqrt(v_hat) <= (1 - b1) / sqrt(1 - b2) / bias corrections, bounded by a small constant.
    const double b1 = c.beta1, b2 = c.beta2;
    const double ratio = (1 - std::pow(b1, step)) > 0
                             ? (1 - b1) / std::sqrt(1 - b2) * std::sqrt(1 - std::pow(b2, step)) / (1 - std::pow(b1, step))
                             : 1.0;
    const double bound_adam = std::max(1.0, ratio) * c.lr * std::sqrt(double(step));
    for (Index i = 0; i < 50; ++i) {
      EXPECT_LE(std::abs(w[i] - before[i]), bound_adam + c.lr * c.weight_decay * std::abs(before[i]) + 1e-15);
    }
  }
}

TEST(Optimizer, StateRoundTripsBitIdentically) {
  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::adamw}) {
    std::mt19937_64 rng(3);
    OptimizerConfig c;
    c.kind = kind;
    c.weight_decay = 1e-3;
    T64 a = random_tensor({3, 3}, rng), b = random_tensor({3}, rng);
    std::vector<Parameter<double>> params{{"a", a, ParamRole::weight}, {"b", b, ParamRole::bias}};
    Optimizer<double> first(c, params);
    auto feed = [&](std::uint64_t seed) {
      std::mt19937_64 g(seed);
      a.mutable_grad() = random_tensor({3, 3}, g, false).values();
      b.mutable_grad() = random_tensor({3}, g, false).values();
    };
    for (int i = 0; i < 3; ++i) {
      feed(10 + i);
      first.step();
    }
    const Buffer<double> a_saved = a.values(), b_saved = b.values();
    Optimizer<double> second(c, params);
    second.load_state(first.state());
    EXPECT_EQ(second.step_count(), 3);

    feed(99);
    first.step();
    const Buffer<double> a_first = a.values(), b_first = b.values();
    a.mutable_values() = a_saved;
    b.mutable_values() = b_saved;
    feed(99);
    second.step();
    EXPECT_TRUE((a.values() == a_first).all());
    EXPECT_TRUE((b.values() == b_first).all());
  }
}

TEST(Optimizer, InvalidConfiguration) {
  EXPECT_THROW(Optimizer<double>(sgd(-0.1, 0.9, 0.0), {}), ConfigurationError);
  EXPECT_THROW(Optimizer<double>(sgd(0.1, 1.0, 0.0), {}), ConfigurationError);
  EXPECT_THROW(Optimizer<double>(sgd(0.1, 0.9, -1.0), {}), ConfigurationError);
  EXPECT_THROW(parse_optimizer_kind("rmsprop"), ConfigurationError);
}

TEST(Cosine, EndpointsAndMidpoint) {
  ScheduleConfig s{0.1, 0.0, 100};
  EXPECT_DOUBLE_EQ(cosine_lr(s, 0), 0.1);
  EXPECT_NEAR(cosine_lr(s, 50), 0.05, 1e-15);
  EXPECT_NEAR(cosine_lr(s, 100), 0.0, 1e-15);
  ScheduleConfig t{0.1, 0.02, 20};
  EXPECT_NEAR(cosine_lr(t, 10), 0.06, 1e-15);
  EXPECT_NEAR(cosine_lr(t, 20), 0.02, 1e-15);
}

TEST(Cosine, MonotoneNonIncreasing) {
  ScheduleConfig s{0.3, 0.001, 37};
  for (int t = 1; t <= 37; ++t) EXPECT_LE(cosine_lr(s, t), cosine_lr(s, t - 1));
}

TEST(Cosine, OutOfRangeEpochIsUsageError) {
  ScheduleConfig s{0.1, 0.0, 10};
  EXPECT_THROW(cosine_lr(s, 11), UsageError);
  EXPECT_THROW(cosine_lr(s, -1), UsageError);
  EXPECT_THROW(cosine_lr(ScheduleConfig{0.1, 0.0, 0}, 0), ConfigurationError);
}
