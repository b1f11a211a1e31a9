#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace demo {

// Energy captured by the top-k coefficients of each chunk, DCT versus the
// raw samples, averaged over random signals.
struct CompactionBenchConfig {
  std::string signal = "ar1";  // ar1 | white | constant
  double rho = 0.95;           // ar1 correlation
  std::size_t length = 64;
  std::size_t chunk = 64;      // clamped to a divisor of length
  std::size_t k = 8;           // per chunk, clamped to the chunk size
  std::size_t trials = 1000;
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError
};

struct CompactionBenchResult {
  double dct_fraction = 0.0;
  double identity_fraction = 0.0;
  double dct_sem = 0.0;       // standard error of the mean
  double identity_sem = 0.0;
  std::size_t chunk = 0;
  std::size_t k = 0;
  std::size_t trials = 0;
};

CompactionBenchResult bench_compaction(const CompactionBenchConfig& cfg);

}  // namespace demo
