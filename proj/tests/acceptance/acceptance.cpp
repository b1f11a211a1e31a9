// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "demo/bench.hpp"
#include "demo/collective.hpp"
#include "demo/compaction.hpp"
#include "demo/config.hpp"
#include "demo/dct.hpp"
#include "demo/harness.hpp"
#include "demo/models.hpp"
#include "demo/optimizer.hpp"
#include "demo/report.hpp"

using namespace demo;

namespace {

// Tolerances.
constexpr double kRoundTripF32 = 1e-5;
constexpr double kRoundTripF64 = 1e-12;
constexpr double kRoundTripSeconds = 30.0;
constexpr double kParsevalF32 = 1e-4;
constexpr double kEnergyRelative = 1e-3;
constexpr double kFullKResidual = 1e-10;  // relative to total energy
constexpr double kSgdCollapse = 1e-5;
constexpr double kSignCollapse = 1e-6;
constexpr double kMergeExact = 1e-12;
constexpr double kMergeMean = 1e-5;
constexpr double kTransportLoss = 1e-7;
constexpr double kFiniteDifference = 1e-4;
constexpr double kBenchTolerance = 0.02;
constexpr double kParitySeconds = 300.0;

// Oracle values, see tests/oracles/.
constexpr double kAr1DctFraction = 0.9182;
constexpr double kAr1IdentityFraction = 0.4173;
// Final full-batch loss of synced Signum (beta 0.9) on logistic_parity, seeds 0..4.
constexpr double kBaselineLosses[] = {0.34715993720398836, 0.2219527274306007,
                                      0.36784364831747746, 0.38622014111294517,
                                      0.3906431681876151};
constexpr double kBaselineMean = 0.34276392445052534;
constexpr double kBaselineStd = 0.06968595186657969;
constexpr int kParitySeeds = 5;

constexpr const char* kParityConfig = R"([model]
kind = "logistic"

[data]
samples = 4096
heldout = 1024
features = 32
classes = 8
separation = 0.5
noise = 1.0
batch = 32

[optimizer]
kind = "demo"
lr = 0.003
beta = 0.999
s = 8
k = 4
signum = true

[run]
workers = 4
steps = 1000
seed = 0
eval_every = 0
)";

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  %2d %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <Real T>
DenseTensor<T> random_tensor(const Shape& s, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<T> v(volume(s));
  for (auto& x : v) x = static_cast<T>(n(rng));
  return DenseTensor<T>(s, std::move(v));
}

template <Real T>
DenseTensor<T> seeded_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor<T>(s, rng);
}

template <class Fn>
void on_threads(int world, Fn fn) {
  std::vector<std::thread> ts;
  for (int r = 0; r < world; ++r) ts.emplace_back(fn, r);
  for (auto& t : ts) t.join();
}

template <Real T>
double sum_sq(const DenseTensor<T>& t) {
  double s = 0.0;
  for (T v : t.values()) s += static_cast<double>(v) * v;
  return s;
}

const std::vector<Shape> kChunkShapes{{64}, {8, 8}, {64, 64}, {4, 4, 4}};

void dct_round_trip() {
  BasisCache cache;
  std::mt19937_64 rng(1);
  double err32 = 0.0, err64 = 0.0;
  constexpr int kChunks = 10000;
  const auto t0 = Clock::now();
  for (int i = 0; i < kChunks; ++i) {
    const auto& shape = kChunkShapes[i % kChunkShapes.size()];
    const auto x32 = random_tensor<float>(shape, rng);
    const auto y32 = dct_inverse_chunk(dct_forward_chunk(x32, cache), cache);
    for (std::size_t j = 0; j < x32.size(); ++j) {
      err32 = std::max(err32, std::abs(static_cast<double>(y32[j]) - x32[j]));
    }
    const auto x64 = random_tensor<double>(shape, rng);
    const auto y64 = dct_inverse_chunk(dct_forward_chunk(x64, cache), cache);
    for (std::size_t j = 0; j < x64.size(); ++j) err64 = std::max(err64, std::abs(y64[j] - x64[j]));
  }
  const double secs = seconds_since(t0);
  report(1, "dct round-trip",
         err32 < kRoundTripF32 && err64 < kRoundTripF64 && secs < kRoundTripSeconds,
         fmt("%d chunks per precision, max err f32 %.2e f64 %.2e, %.1f s", kChunks, err32, err64,
             secs));
}

void parseval() {
  BasisCache cache;
  std::mt19937_64 rng(2);
  double worst = 0.0;
  constexpr int kChunks = 10000;
  for (int i = 0; i < kChunks; ++i) {
    const auto& shape = kChunkShapes[i % kChunkShapes.size()];
    const auto x = random_tensor<float>(shape, rng);
    const double ex = sum_sq(x);
    const double ec = sum_sq(dct_forward_chunk(x, cache));
    worst = std::max(worst, std::abs(ex - ec) / ex);
  }
  report(2, "parseval", worst < kParsevalF32,
         fmt("%d chunks f32, worst relative error %.2e", kChunks, worst));
}

void compaction_monotonicity() {
  BasisCache cache;
  std::mt19937_64 rng(3);
  const std::vector<std::pair<Shape, std::size_t>> cases{
      {{32, 32}, 8}, {{64}, 16}, {{16, 24}, 4}, {{8, 8, 8}, 4}};
  bool monotone = true;
  double worst = 0.0, worst_full = 0.0;
  constexpr int kTensors = 100;
  for (int t = 0; t < kTensors; ++t) {
    const auto& [shape, s] = cases[t % cases.size()];
    const auto g = clamp_chunk_shape(shape, s);
    const auto m = random_tensor<float>(shape, rng);

    // Independent reference: double DCT of each chunk, coefficient energies sorted.
    const TensorF64 m64(shape, std::vector<double>(m.values().begin(), m.values().end()));
    const auto view = chunk(m64, g);
    std::vector<std::vector<double>> energies;
    for (std::size_t c = 0; c < view.count(); ++c) {
      const auto coeffs = dct_forward_chunk(view.chunk_tensor(c), cache);
      std::vector<double> e;
      for (double v : coeffs.values()) e.push_back(v * v);
      std::sort(e.begin(), e.end(), std::greater<>());
      energies.push_back(std::move(e));
    }
    const double total = sum_sq(m64);

    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= g.chunk_volume(); k *= 2) {
      const auto ex = extract_fast_components(m, g, k, cache);
      double residual = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        const double d = static_cast<double>(m[i]) - ex.fast[i];
        residual += d * d;
      }
      double dropped = 0.0;
      for (const auto& e : energies) dropped = std::accumulate(e.begin() + k, e.end(), dropped);
      if (residual > previous + kFullKResidual * total) monotone = false;
      previous = residual;
      if (k < g.chunk_volume()) {
        worst = std::max(worst, std::abs(residual - dropped) / dropped);
      } else {
        worst_full = std::max(worst_full, residual / total);
      }
    }
  }
  report(3, "compaction monotonicity",
         monotone && worst < kEnergyRelative && worst_full < kFullKResidual,
         fmt("%d tensors, monotone %s, worst energy identity error %.2e, full-k residual %.1e",
             kTensors, monotone ? "yes" : "no", worst, worst_full));
}

void baseline_collapse() {
  // DeMo without sign, one worker, full k against plain SGD.
  double sgd_err = 0.0;
  {
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
    std::vector<TensorF32> x{seeded_tensor<float>(shape, 1)};
    std::vector<double> oracle(x[0].values().begin(), x[0].values().end());
    for (int step = 0; step < 100; ++step) {
      std::vector<TensorF32> g{seeded_tensor<float>(shape, 100 + step)};
      opt.step(x, g, coll);
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        oracle[i] -= cfg.learning_rate * g[0][i];
        sgd_err = std::max(sgd_err, std::abs(x[0][i] - oracle[i]));
      }
    }
  }

  // DeMo with sign, four workers, full k against sign of the mean gradient.
  double sign_err = 0.0;
  {
    constexpr int W = 4;
    constexpr int kSteps = 100;
    DemoConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.chunk = 4;
    cfg.topk = 16;
    cfg.signum = true;
    const Shape shape{8, 4};
    auto hub = std::make_shared<InMemoryHub>(W);
    const auto x0 = seeded_tensor<double>(shape, 5);
    std::vector<std::vector<TensorF64>> traj(W);
    on_threads(W, [&](int r) {
      DemoOptimizer<double> opt(cfg, {shape});
      InMemoryCollective coll(hub, r);
      std::vector<TensorF64> x{x0};
      for (int step = 0; step < kSteps; ++step) {
        std::vector<TensorF64> g{seeded_tensor<double>(shape, 1000 * step + r)};
        opt.step(x, g, coll);
        traj[r].push_back(x[0]);
      }
    });
    std::vector<double> oracle(x0.values());
    for (int step = 0; step < kSteps; ++step) {
      std::vector<double> mean(oracle.size(), 0.0);
      for (int r = 0; r < W; ++r) {
        const auto g = seeded_tensor<double>(shape, 1000 * step + r);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
      }
      for (std::size_t i = 0; i < oracle.size(); ++i) {
        const double m = mean[i] / W;
        oracle[i] -= cfg.learning_rate * (m > 0 ? 1.0 : (m < 0 ? -1.0 : 0.0));
        for (int r = 0; r < W; ++r) sign_err = std::max(sign_err, std::abs(traj[r][step][i] - oracle[i]));
      }
    }
  }
  report(4, "baseline collapse", sgd_err < kSgdCollapse && sign_err < kSignCollapse,
         fmt("sgd W=1 max dev %.2e, sign-of-mean W=4 max dev %.2e (100 steps)", sgd_err,
             sign_err));
}

CompressedComponents single_bin(const ChunkGeometry& g, std::uint32_t bin, float amp) {
  CompressedComponents c;
  c.geometry = g;
  c.k = 1;
  c.freq.assign(g.chunk_count(), bin);
  c.ampl.assign(g.chunk_count(), amp);
  return c;
}

void merge_cases() {
  BasisCache cache;
  // Unit chunks have the identity as their transform, so merged values are exact.
  const ChunkGeometry unit({4}, {1});
  const std::vector<CompressedComponents> shared_unit{single_bin(unit, 0, 1.0f),
                                                      single_bin(unit, 0, 3.0f)};
  const bool unit_exact =
      merge_and_reconstruct<double>(shared_unit, unit, cache).values() == std::vector<double>(4, 2.0);

  const ChunkGeometry g({8}, {8});
  const std::vector<CompressedComponents> shared{single_bin(g, 5, 1.0f), single_bin(g, 5, 3.0f)};
  const std::vector<CompressedComponents> disjoint{single_bin(g, 3, 4.0f), single_bin(g, 7, -2.0f)};
  const auto cs = dct_forward_chunk(merge_and_reconstruct<double>(shared, g, cache), cache);
  const auto cd = dct_forward_chunk(merge_and_reconstruct<double>(disjoint, g, cache), cache);
  double hand_err = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    hand_err = std::max(hand_err, std::abs(cs[i] - (i == 5 ? 2.0 : 0.0)));
    hand_err = std::max(hand_err, std::abs(cd[i] - (i == 3 ? 4.0 : (i == 7 ? -2.0 : 0.0))));
  }

  const ChunkGeometry g4({16, 16}, {8, 8});
  std::vector<TensorF64> ms;
  std::vector<CompressedComponents> all;
  for (std::uint64_t w = 0; w < 4; ++w) {
    ms.push_back(seeded_tensor<double>({16, 16}, 200 + w));
    all.push_back(extract_fast_components(ms.back(), g4, 64, cache).components);
  }
  const auto q = merge_and_reconstruct<double>(all, g4, cache);
  double mean_err = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double mean = (ms[0][i] + ms[1][i] + ms[2][i] + ms[3][i]) / 4.0;
    mean_err = std::max(mean_err, std::abs(q[i] - mean));
  }
  report(5, "duplicate-averaging merge",
         unit_exact && hand_err < kMergeExact && mean_err < kMergeMean,
         fmt("unit-chunk exact %s, W=2 hand cases max err %.1e, W=4 mean max err %.1e",
             unit_exact ? "yes" : "no", hand_err, mean_err));
}

RunConfig parity_config() { return parse_config(kParityConfig); }

RunConfig small_config(const std::string& transport) {
  auto cfg = parity_config();
  cfg.run.steps = 50;
  cfg.transport.kind = transport;
  return cfg;
}

std::uint64_t payload_of(const RunConfig& cfg) {
  const auto m = run_experiment(cfg);
  return m.ledger.steps().front().payload_bytes();
}

void communication_arithmetic() {
  bool ledger_ok = true;
  std::size_t checked = 0;
  for (const std::string transport : {"memory", "tcp"}) {
    const auto cfg = small_config(transport);
    const auto m = run_experiment(cfg);
    const auto est = bytes_per_step(m.geometries, cfg.optimizer.k, static_cast<int>(cfg.run.workers));
    for (const auto& s : m.ledger.steps()) {
      ledger_ok = ledger_ok && s.bytes_sent == est.bytes_sent &&
                  s.bytes_received == est.bytes_received && s.payload_bytes() == est.payload_bytes;
      ++checked;
    }
  }

  // All-2-D model: features 32, hidden 64, classes 16, no biases.
  auto base = small_config("memory");
  base.run.steps = 1;
  base.model.kind = "mlp";
  base.model.bias = false;
  base.data.classes = 16;
  base.optimizer.s = 8;
  auto with = [&](std::size_t s, std::size_t k) {
    auto c = base;
    c.optimizer.s = s;
    c.optimizer.k = k;
    return payload_of(c);
  };
  const double halving = static_cast<double>(with(8, 8)) / static_cast<double>(with(8, 4));
  const double quarter = static_cast<double>(with(8, 4)) / static_cast<double>(with(16, 4));

  // Equal pairs: s=64,k=8 and s=128,k=32 on 2-D shapes divisible by 128.
  const std::vector<Shape> shapes{{1024, 256}, {256, 1024}, {256, 256}};
  const auto tx = data_tx_table(shapes, {64, 128}, {8, 32}, 4);
  const bool pair_equal = tx[0].payload_bytes == tx[3].payload_bytes;

  // Desk-scale default MLP, s=64, k=8, 2-D layers only.
  RunConfig mlp;
  const auto problem = make_problem(mlp);
  std::vector<ChunkGeometry> two_d;
  for (const auto& s : problem.model->param_shapes()) {
    if (s.size() == 2) two_d.push_back(clamp_chunk_shape(s, mlp.optimizer.s));
  }
  const auto est2d = bytes_per_step(two_d, mlp.optimizer.k, 4);
  const double fraction =
      static_cast<double>(est2d.payload_bytes) / static_cast<double>(dense_gradient_bytes(two_d));

  report(6, "communication arithmetic",
         ledger_ok && halving == 2.0 && quarter == 4.0 && pair_equal && fraction < 0.01,
         fmt("%zu ledger steps equal analytic, k/2 ratio %.3f, 2s ratio %.3f, "
             "s64k8==s128k32 %s, 2-D payload %.4f%% of dense",
             checked, halving, quarter, pair_equal ? "yes" : "no", 100.0 * fraction));
}

void convergence_parity() {
  const auto t0 = Clock::now();
  const double eps = 3.0 * kBaselineStd;
  std::vector<double> demo_losses, base_losses;
  for (int seed = 0; seed < kParitySeeds; ++seed) {
    auto cfg = parity_config();
    cfg.run.seed = static_cast<std::uint64_t>(seed);
    demo_losses.push_back(run_experiment(cfg).final_loss());
    cfg.optimizer.kind = "signum";
    cfg.optimizer.beta = 0.9;
    base_losses.push_back(run_experiment(cfg).final_loss());
  }
  const double demo_mean = std::accumulate(demo_losses.begin(), demo_losses.end(), 0.0) / kParitySeeds;
  double replay = 0.0;
  for (int i = 0; i < kParitySeeds; ++i) {
    replay = std::max(replay, std::abs(base_losses[i] - kBaselineLosses[i]));
  }
  const double secs = seconds_since(t0);
  const bool replay_ok = replay < 1e-9;
  report(7, "convergence parity",
         std::abs(demo_mean - kBaselineMean) <= eps && replay_ok && secs < kParitySeconds,
         fmt("demo mean %.5f vs signum %.5f, |diff| %.5f <= eps %.5f, baseline replay %s, %.1f s",
             demo_mean, kBaselineMean, std::abs(demo_mean - kBaselineMean), eps,
             replay_ok ? "ok" : "drifted", secs));
}

void transport_equivalence() {
  auto mem_cfg = parity_config();
  mem_cfg.run.steps = 200;
  auto tcp_cfg = mem_cfg;
  tcp_cfg.transport.kind = "tcp";
  const auto mem = run_experiment(mem_cfg);
  const auto tcp = run_experiment(tcp_cfg);
  const bool same_bytes = mem.gather_digests == tcp.gather_digests &&
                          mem.ledger.total_sent() == tcp.ledger.total_sent();
  const double diff = std::abs(mem.final_loss() - tcp.final_loss());
  report(8, "transport equivalence", same_bytes && diff < kTransportLoss,
         fmt("%zu gathered digests identical %s, final loss diff %.1e", mem.gather_digests.size(),
             same_bytes ? "yes" : "no", diff));
}

void gradient_checks() {
  struct Case {
    std::string name;
    std::unique_ptr<Model> model;
    Dataset data;
  };
  std::vector<Case> cases;
  {
    RunConfig c;
    c.model.kind = "quadratic";
    c.data.features = 16;
    auto p = make_problem(c);
    cases.push_back({"quadratic", std::move(p.model), std::move(p.train)});
  }
  cases.push_back({"linear", std::make_unique<LinearRegression>(8, 3),
                   make_linear_teacher(32, 8, 3, 0.1, 7)});
  const auto blobs = make_blobs(32, 8, 4, 1.0, 1.0, 8);
  cases.push_back({"logistic", std::make_unique<LogisticRegression>(8, 4), blobs});
  cases.push_back({"mlp-tanh", std::make_unique<Mlp>(8, std::vector<std::size_t>{16}, 4), blobs});
  cases.push_back({"mlp-relu-2", std::make_unique<Mlp>(8, std::vector<std::size_t>{16, 12}, 4,
                                                       Activation::kRelu),
                   blobs});
  cases.push_back({"mlp-nobias", std::make_unique<Mlp>(8, std::vector<std::size_t>{16}, 4,
                                                       Activation::kTanh, false),
                   blobs});
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double e = finite_difference_check(*c.model, c.data, 200, 11);
    if (e >= worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  report(9, "gradient checks", worst < kFiniteDifference,
         fmt("%zu models, worst relative error %.2e (%s)", cases.size(), worst, worst_name.c_str()));
}

void compaction_benchmark() {
  CompactionBenchConfig c;
  c.signal = "ar1";
  c.rho = 0.95;
  c.length = 64;
  c.chunk = 64;
  c.k = 8;
  c.trials = 1000;
  c.seed = 1;
  const auto r = bench_compaction(c);
  const bool pass = r.dct_fraction > r.identity_fraction &&
                    std::abs(r.dct_fraction - kAr1DctFraction) <= kBenchTolerance &&
                    std::abs(r.identity_fraction - kAr1IdentityFraction) <= kBenchTolerance;
  report(10, "energy compaction benchmark", pass,
         fmt("dct %.4f (oracle %.4f), identity %.4f (oracle %.4f), 1000 trials", r.dct_fraction,
             kAr1DctFraction, r.identity_fraction, kAr1IdentityFraction));
}

void determinism() {
  auto cfg = parity_config();
  cfg.run.steps = 200;
  cfg.run.eval_every = 20;
  std::ostringstream a, b;
  run_experiment(cfg).write_csv(a);
  run_experiment(cfg).write_csv(b);
  report(11, "determinism", a.str() == b.str() && !a.str().empty(),
         fmt("metrics csv %zu bytes, byte-identical %s", a.str().size(),
             a.str() == b.str() ? "yes" : "no"));
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<void()>>> criteria{
      {1, dct_round_trip},
      {2, parseval},
      {3, compaction_monotonicity},
      {4, baseline_collapse},
      {5, merge_cases},
      {6, communication_arithmetic},
      {7, convergence_parity},
      {8, transport_equivalence},
      {9, gradient_checks},
      {10, compaction_benchmark},
      {11, determinism},
  };
  for (const auto& [id, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, "criterion", false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
