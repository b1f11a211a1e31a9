#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "demo/optimizer.hpp"

using namespace demo;

namespace {

template <Real T>
DenseTensor<T> random_tensor(const Shape& s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  std::vector<T> v(volume(s));
  for (auto& x : v) x = static_cast<T>(n(rng));
  return DenseTensor<T>(s, v);
}

template <class Fn>
void on_threads(int world, Fn fn) {
  std::vector<std::thread> ts;
  for (int r = 0; r < world; ++r) ts.emplace_back(fn, r);
  for (auto& t : ts) t.join();
}

}  // namespace

TEST(Sign, Examples) {
  TensorF64 t({3}, std::vector<double>{-3.2, 0.0, 7.0});
  EXPECT_EQ(sign(t).values(), (std::vector<double>{-1, 0, 1}));
}

TEST(Sign, IdempotentAndOdd) {
  auto t = random_tensor<float>({50}, 3);
  t[4] = 0.0f;
  EXPECT_EQ(sign(sign(t)), sign(t));
  TensorF32 neg(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) neg[i] = -t[i];
  auto s = sign(t), sn = sign(neg);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(sn[i], -s[i]);
}

TEST(DemoConfig, Validation) {
  DemoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.momentum_decay = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DemoConfig{};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = DemoConfig{};
  c.topk = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(DemoOptimizer, GeometryAndEffectiveK) {
  DemoConfig cfg;
  cfg.chunk = 64;
  cfg.topk = 8;
  DemoOptimizer<float> opt(cfg, {{100, 64}, {4}});
  auto g = opt.geometries();
  EXPECT_EQ(g[0].chunk_shape(), (Shape{50, 64}));
  EXPECT_EQ(opt.states()[0].k, 8u);
  EXPECT_EQ(opt.states()[1].k, 4u);
  EXPECT_EQ(opt.state_elements(), 100u * 64u + 4u);
}

TEST(DemoOptimizer, SingleWorkerFullKIsPlainSgd) {
  DemoConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.momentum_decay = 0.9;
  cfg.chunk = 4;
  cfg.topk = 16;
  cfg.signum = false;
  const Shape shape{8, 8};
  DemoOptimizer<float> opt(cfg, {shape});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);

  std::vector<TensorF32> x{random_tensor<float>(shape, 1)};
  std::vector<double> oracle(x[0].values().begin(), x[0].values().end());
  for (int step = 0; step < 100; ++step) {
    std::vector<TensorF32> g{random_tensor<float>(shape, 100 + step)};
    opt.step(x, g, coll);
    for (std::size_t i = 0; i < oracle.size(); ++i) oracle[i] -= cfg.learning_rate * g[0][i];
    for (std::size_t i = 0; i < oracle.size(); ++i) ASSERT_NEAR(x[0][i], oracle[i], 1e-5);
    for (float m : opt.states()[0].momentum.values()) ASSERT_LT(std::abs(m), 1e-5);
  }
}

TEST(DemoOptimizer, FourWorkersFullKSignumIsSignOfMean) {
  constexpr int W = 4;
  DemoConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.chunk = 4;
  cfg.topk = 16;
  cfg.signum = true;
  const Shape shape{8, 4};
  auto hub = std::make_shared<InMemoryHub>(W);
  const auto x0 = random_tensor<double>(shape, 5);
  std::vector<TensorF64> finals(W);
  std::vector<std::vector<TensorF64>> traj(W);
  on_threads(W, [&](int r) {
    DemoOptimizer<double> opt(cfg, {shape});
    InMemoryCollective coll(hub, r);
    std::vector<TensorF64> x{x0};
    for (int step = 0; step < 30; ++step) {
      std::vector<TensorF64> g{random_tensor<double>(shape, 1000 * step + r)};
      opt.step(x, g, coll);
      traj[r].push_back(x[0]);
    }
  });

  std::vector<double> oracle(x0.values());
  for (int step = 0; step < 30; ++step) {
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      double mean = 0;
      for (int r = 0; r < W; ++r) mean += random_tensor<double>(shape, 1000 * step + r)[i];
      mean /= W;
      oracle[i] -= cfg.learning_rate * (mean > 0 ? 1.0 : (mean < 0 ? -1.0 : 0.0));
    }
    for (int r = 0; r < W; ++r) {
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        ASSERT_NEAR(traj[r][step][i], oracle[i], 1e-6);
      }
    }
  }
}

TEST(DemoOptimizer, ZeroGradientLeavesParameters) {
  DemoConfig cfg;
  cfg.chunk = 4;
  cfg.topk = 2;
  DemoOptimizer<float> opt(cfg, {{8}});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);
  std::vector<TensorF32> x{random_tensor<float>({8}, 2)};
  const auto before = x[0];
  std::vector<TensorF32> g{TensorF32({8}, 0.0f)};
  for (int i = 0; i < 5; ++i) opt.step(x, g, coll);
  EXPECT_EQ(x[0], before);
}

TEST(DemoOptimizer, WeightDecayPrecedesUpdate) {
  DemoConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  cfg.chunk = 2;
  cfg.topk = 2;
  DemoOptimizer<double> opt(cfg, {{2}});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);
  std::vector<TensorF64> x{TensorF64({2}, std::vector<double>{1.0, -2.0})};
  std::vector<TensorF64> g{TensorF64({2}, std::vector<double>{3.0, 0.0})};
  opt.step(x, g, coll);
  EXPECT_NEAR(x[0][0], 1.0 * 0.95 - 0.1, 1e-12);
  EXPECT_NEAR(x[0][1], -2.0 * 0.95, 1e-12);
}

TEST(DemoOptimizer, RejectsMismatchedShapes) {
  DemoConfig cfg;
  DemoOptimizer<float> opt(cfg, {{8}});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);
  std::vector<TensorF32> x{TensorF32({8})};
  std::vector<TensorF32> g{TensorF32({4})};
  EXPECT_THROW(opt.step(x, g, coll), ShapeMismatch);
  std::vector<TensorF32> none;
  EXPECT_THROW(opt.step(none, none, coll), ShapeMismatch);
}

// Momenta drift apart under different local gradients while every worker
// applies the same update.
TEST(DemoOptimizer, MomentaDecoupleParametersDoNot) {
  constexpr int W = 4;
  DemoConfig cfg;
  cfg.chunk = 4;
  cfg.topk = 2;
  cfg.learning_rate = 0.01;
  const Shape shape{8, 8};
  auto hub = std::make_shared<InMemoryHub>(W);
  std::vector<std::vector<TensorF32>> params(W), momenta(W);
  on_threads(W, [&](int r) {
    DemoOptimizer<float> opt(cfg, {shape});
    InMemoryCollective coll(hub, r);
    std::vector<TensorF32> x{random_tensor<float>(shape, 77)};
    for (int step = 0; step < 20; ++step) {
      std::vector<TensorF32> g{random_tensor<float>(shape, 50 * step + r)};
      opt.step(x, g, coll);
      params[r].push_back(x[0]);
      momenta[r].push_back(opt.states()[0].momentum);
    }
  });
  for (int step = 0; step < 20; ++step) {
    for (int r = 1; r < W; ++r) {
      ASSERT_EQ(params[r][step], params[0][step]);
      ASSERT_NE(momenta[r][step], momenta[0][step]);
    }
  }
}

TEST(DemoOptimizer, FullKFlushesMomentum) {
  DemoConfig cfg;
  cfg.chunk = 8;
  cfg.topk = 64;
  DemoOptimizer<float> opt(cfg, {{16, 8}});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);
  std::vector<TensorF32> x{TensorF32({16, 8})};
  for (int step = 0; step < 10; ++step) {
    std::vector<TensorF32> g{random_tensor<float>({16, 8}, step, 10.0)};
    opt.step(x, g, coll);
    for (float m : opt.states()[0].momentum.values()) ASSERT_LT(std::abs(m), 1e-5);
  }
}

// With a constant gradient and small k the slow part builds up in the
// residual until it is sent. Bookkeeping: everything injected is either
// transmitted, still in the residual, or decayed away.
TEST(DemoOptimizer, SlowComponentsAreEventuallyTransmitted) {
  DemoConfig cfg;
  cfg.chunk = 16;
  cfg.topk = 1;
  cfg.momentum_decay = 0.999;
  cfg.signum = false;
  cfg.learning_rate = 1.0;
  const Shape shape{16};
  DemoOptimizer<double> opt(cfg, {shape});
  auto hub = std::make_shared<InMemoryHub>(1);
  InMemoryCollective coll(hub, 0);
  const auto g = random_tensor<double>(shape, 9);
  std::vector<TensorF64> x{TensorF64(shape)};
  std::vector<double> decayed(16, 0.0);
  const int T = 400;
  for (int t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < 16; ++i) decayed[i] += (1 - cfg.momentum_decay) * opt.states()[0].momentum[i];
    std::vector<TensorF64> gs{g};
    opt.step(x, gs, coll);
  }
  double injected = 0, sent_along = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    const double total = T * g[i];
    const double sent = -x[0][i];
    EXPECT_NEAR(sent + opt.states()[0].momentum[i] + decayed[i], total, 1e-4 * std::abs(T * g[i]) + 1e-3);
    injected += total * total;
    sent_along += sent * total;
  }
  EXPECT_GT(sent_along / injected, 0.95);
}

TEST(Baseline, AdamWFirstStepIsLearningRate) {
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kAdamW;
  cfg.learning_rate = 0.01;
  BaselineOptimizer<double> opt(cfg, {{5}});
  std::vector<TensorF64> x{TensorF64({5}, 2.0)};
  std::vector<TensorF64> g{TensorF64({5}, 1.0)};
  opt.step(x, g);
  for (double v : x[0].values()) EXPECT_NEAR(v, 2.0 - 0.01, 1e-9);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(Baseline, AdamWDecoupledDecay) {
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kAdamW;
  cfg.learning_rate = 0.01;
  cfg.weight_decay = 0.1;
  BaselineOptimizer<double> opt(cfg, {{1}});
  std::vector<TensorF64> x{TensorF64({1}, 2.0)};
  std::vector<TensorF64> g{TensorF64({1}, 1.0)};
  opt.step(x, g);
  EXPECT_NEAR(x[0][0], 2.0 * (1 - 0.001) - 0.01, 1e-9);
}

TEST(Baseline, SgdWithoutMomentum) {
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kSgdMomentum;
  cfg.beta1 = 0.0;
  cfg.learning_rate = 0.5;
  BaselineOptimizer<double> opt(cfg, {{2}});
  std::vector<TensorF64> x{TensorF64({2}, std::vector<double>{1, 1})};
  std::vector<TensorF64> g{TensorF64({2}, std::vector<double>{2, -4})};
  opt.step(x, g);
  EXPECT_EQ(x[0].values(), (std::vector<double>{0, 3}));
}

TEST(Baseline, SgdMomentumAccumulates) {
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kSgdMomentum;
  cfg.beta1 = 0.5;
  cfg.learning_rate = 1.0;
  BaselineOptimizer<double> opt(cfg, {{1}});
  std::vector<TensorF64> x{TensorF64({1}, 0.0)};
  std::vector<TensorF64> g{TensorF64({1}, 1.0)};
  opt.step(x, g);
  opt.step(x, g);
  EXPECT_DOUBLE_EQ(x[0][0], -(1.0 + 1.5));
}

TEST(Baseline, SignumZeroGradientIsNoop) {
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kSignum;
  BaselineOptimizer<float> opt(cfg, {{3}});
  std::vector<TensorF32> x{TensorF32({3}, std::vector<float>{1, 2, 3})};
  std::vector<TensorF32> g{TensorF32({3}, 0.0f)};
  opt.step(x, g);
  EXPECT_EQ(x[0].values(), (std::vector<float>{1, 2, 3}));
}

TEST(Baseline, StateSizes) {
  const std::vector<Shape> shapes{{4, 4}, {4}};
  BaselineConfig cfg;
  cfg.kind = BaselineKind::kAdamW;
  EXPECT_EQ(BaselineOptimizer<float>(cfg, shapes).state_elements(), 40u);
  cfg.kind = BaselineKind::kSignum;
  EXPECT_EQ(BaselineOptimizer<float>(cfg, shapes).state_elements(), 20u);
  EXPECT_EQ(DemoOptimizer<float>(DemoConfig{}, shapes).state_elements(), 20u);
}
