#include "demo/bench.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "demo/compaction.hpp"
#include "demo/dct.hpp"
#include "demo/errors.hpp"

namespace demo {

void CompactionBenchConfig::validate() const {
  if (signal != "ar1" && signal != "white" && signal != "constant") {
    throw UsageError("signal must be ar1, white or constant");
  }
  if (!(rho > -1.0 && rho < 1.0)) throw UsageError("rho must lie in (-1, 1)");
  if (length < 1) throw UsageError("length must be >= 1");
  if (chunk < 1) throw UsageError("chunk must be >= 1");
  if (k < 1) throw UsageError("k must be >= 1");
  if (trials < 1) throw UsageError("trials must be >= 1");
}

namespace {

// Fraction of the total energy held by the k largest-magnitude entries of
// each chunk.
double topk_fraction(const std::vector<double>& v, std::size_t chunk, std::size_t k) {
  double kept = 0.0, total = 0.0;
  for (std::size_t c = 0; c < v.size(); c += chunk) {
    std::span<const double> block(v.data() + c, chunk);
    for (double x : block) total += x * x;
    for (std::uint32_t i : select_topk(block, k)) kept += block[i] * block[i];
  }
  return total > 0.0 ? kept / total : 1.0;
}

struct Running {
  double sum = 0.0, sum_sq = 0.0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
  }
  double mean(std::size_t n) const { return sum / static_cast<double>(n); }
  double sem(std::size_t n) const {
    const double m = mean(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - m * m);
    return std::sqrt(var / static_cast<double>(n));
  }
};

}  // namespace

CompactionBenchResult bench_compaction(const CompactionBenchConfig& cfg) {
  cfg.validate();
  const ChunkGeometry g = clamp_chunk_shape({cfg.length}, cfg.chunk);
  const std::size_t chunk = g.chunk_shape()[0];
  const std::size_t k = std::min(cfg.k, chunk);

  BasisCache cache;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double innovation = std::sqrt(1.0 - cfg.rho * cfg.rho);

  Running dct_stats, id_stats;
  std::vector<double> x(cfg.length), coeffs(cfg.length);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    if (cfg.signal == "ar1") {
      x[0] = normal(rng);
      for (std::size_t i = 1; i < x.size(); ++i) x[i] = cfg.rho * x[i - 1] + innovation * normal(rng);
    } else if (cfg.signal == "white") {
      for (auto& v : x) v = normal(rng);
    } else {
      std::fill(x.begin(), x.end(), 1.0 + std::abs(normal(rng)));
    }
    coeffs = x;
    for (std::size_t c = 0; c < coeffs.size(); c += chunk) {
      transform_block({coeffs.data() + c, chunk}, {chunk}, cache, DctDirection::kForward);
    }
    dct_stats.add(topk_fraction(coeffs, chunk, k));
    id_stats.add(topk_fraction(x, chunk, k));
  }

  CompactionBenchResult r;
  r.dct_fraction = dct_stats.mean(cfg.trials);
  r.identity_fraction = id_stats.mean(cfg.trials);
  r.dct_sem = dct_stats.sem(cfg.trials);
  r.identity_sem = id_stats.sem(cfg.trials);
  r.chunk = chunk;
  r.k = k;
  r.trials = cfg.trials;
  return r;
}

}  // namespace demo
