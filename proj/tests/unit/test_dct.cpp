#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "demo/dct.hpp"

using namespace demo;

namespace {

TensorF64 random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(volume(s));
  for (auto& x : v) x = n(rng);
  return TensorF64(s, v);
}

double max_abs_diff(const TensorF64& a, const TensorF64& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double energy(const TensorF64& t) {
  double e = 0;
  for (double v : t.values()) e += v * v;
  return e;
}

}  // namespace

TEST(BuildBasis, OnePoint) {
  auto b = build_basis(1);
  EXPECT_DOUBLE_EQ(b.fwd(0, 0), 1.0);
}

TEST(BuildBasis, TwoPointMatchesClosedForm) {
  auto b = build_basis(2);
  const double r = 0.70710678118654752;
  EXPECT_NEAR(b.fwd(0, 0), r, 1e-15);
  EXPECT_NEAR(b.fwd(0, 1), r, 1e-15);
  EXPECT_NEAR(b.fwd(1, 0), r, 1e-15);
  EXPECT_NEAR(b.fwd(1, 1), -r, 1e-15);
}

TEST(BuildBasis, OrthonormalAndInverseIsTranspose) {
  for (std::size_t n : {1, 2, 3, 7, 8, 64, 100}) {
    auto b = build_basis(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t k = 0; k < n; ++k) dot += b.fwd(i, k) * b.fwd(j, k);
        ASSERT_NEAR(dot, i == j ? 1.0 : 0.0, 1e-12);
        ASSERT_EQ(b.inv(j, i), b.fwd(i, j));
      }
    }
  }
}

TEST(BuildBasis, RejectsZero) { EXPECT_THROW(build_basis(0), Error); }

TEST(DctForward, ConstantMapsToDc) {
  BasisCache cache;
  auto c = dct_forward_chunk(TensorF64({4}, 1.0), cache);
  EXPECT_NEAR(c[0], 2.0, 1e-14);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_NEAR(c[i], 0.0, 1e-14);
}

TEST(DctForward, ImpulseMatchesScipyOracle) {
  // scipy.fft.dct([1, 0, 0, 0], norm="ortho")
  const double expected[] = {0.5, 0.6532814824381883, 0.5, 0.27059805007309845};
  BasisCache cache;
  auto c = dct_forward_chunk(TensorF64({4}, std::vector<double>{1, 0, 0, 0}), cache);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(c[i], expected[i], 1e-15);
}

TEST(DctForward, MatchesNaiveDirectSum) {
  BasisCache cache;
  const std::size_t n = 16;
  auto x = random_tensor({n}, 3);
  auto c = dct_forward_chunk(x, cache);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x[i] * std::cos(M_PI * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    s *= std::sqrt(2.0 / n) * (k == 0 ? 1.0 / std::sqrt(2.0) : 1.0);
    EXPECT_NEAR(c[k], s, 1e-12);
  }
}

TEST(DctForward, ConstantBlock2d) {
  BasisCache cache;
  auto c = dct_forward_chunk(TensorF64({4, 4}, 1.5), cache);
  EXPECT_NEAR(c[0], 6.0, 1e-13);
  for (std::size_t i = 1; i < 16; ++i) EXPECT_NEAR(c[i], 0.0, 1e-13);
}

TEST(DctInverse, ZeroAndDcImpulse) {
  BasisCache cache;
  auto z = dct_inverse_chunk(TensorF64({8, 8}, 0.0), cache);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
  TensorF64 dc({4, 4}, 0.0);
  dc[0] = 1.0;
  auto x = dct_inverse_chunk(dc, cache);
  for (double v : x.values()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(DctRoundTrip, Float64) {
  BasisCache cache;
  for (const Shape& s : {Shape{8, 8}, Shape{64}, Shape{4, 4, 4}, Shape{3, 5, 2}}) {
    auto x = random_tensor(s, 11);
    EXPECT_LT(max_abs_diff(dct_inverse_chunk(dct_forward_chunk(x, cache), cache), x), 1e-12);
  }
}

TEST(DctRoundTrip, Float32) {
  BasisCache cache;
  auto x64 = random_tensor({8, 8}, 5);
  TensorF32 x({8, 8}, std::vector<float>(x64.values().begin(), x64.values().end()));
  auto y = dct_inverse_chunk(dct_forward_chunk(x, cache), cache);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(DctProperties, Parseval) {
  BasisCache cache;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor({8, 4, 2}, seed);
    auto c = dct_forward_chunk(x, cache);
    EXPECT_NEAR(energy(c), energy(x), 1e-10 * energy(x));
  }
}

TEST(DctProperties, Linearity) {
  BasisCache cache;
  auto x = random_tensor({6, 6}, 1), y = random_tensor({6, 6}, 2);
  const double a = 1.7, b = -0.3;
  TensorF64 mix({6, 6});
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
  auto cm = dct_forward_chunk(mix, cache);
  auto cx = dct_forward_chunk(x, cache), cy = dct_forward_chunk(y, cache);
  for (std::size_t i = 0; i < mix.size(); ++i) EXPECT_NEAR(cm[i], a * cx[i] + b * cy[i], 1e-12);
}

TEST(DctProperties, AxisOrderDoesNotMatter) {
  BasisCache cache;
  const Shape s{4, 6, 2};
  auto x = random_tensor(s, 9);
  std::vector<double> a(x.values()), b(x.values());
  for (std::size_t axis : {0, 1, 2}) {
    transform_axis(a, s, axis, cache.get(s[axis]), DctDirection::kForward);
  }
  for (std::size_t axis : {2, 0, 1}) {
    transform_axis(b, s, axis, cache.get(s[axis]), DctDirection::kForward);
  }
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(BasisCache, ConcurrentGetBuildsOnce) {
  BasisCache cache;
  std::vector<const DctBasis*> seen(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] { seen[t] = &cache.get(32); });
  }
  for (auto& th : threads) th.join();
  for (auto* p : seen) EXPECT_EQ(p, seen[0]);
  EXPECT_EQ(cache.size(), 1u);
}
