#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace demo {

// Row-major sample matrix plus either real targets or class labels.
struct Dataset {
  std::size_t features = 0;
  std::size_t target_dim = 0;          // real targets per row (0 for classification)
  std::size_t classes = 0;             // 0 for regression
  std::vector<double> x;               // size() * features
  std::vector<double> targets;         // size() * target_dim
  std::vector<std::uint32_t> labels;   // size() when classes > 0

  std::size_t size() const { return features == 0 ? 0 : x.size() / features; }
};

using Batch = Dataset;

Batch gather_rows(const Dataset& data, const std::vector<std::size_t>& rows);

// Gaussian class blobs: centers ~ N(0, separation^2), samples = center + N(0, noise^2).
Dataset make_blobs(std::size_t n, std::size_t features, std::size_t classes, double separation,
                   double noise, std::uint64_t seed);

// y = W* x + b* + N(0, noise^2), x ~ N(0, 1), W* ~ N(0, 1/features).
Dataset make_linear_teacher(std::size_t n, std::size_t features, std::size_t outputs, double noise,
                            std::uint64_t seed);

// Target vectors b_i ~ N(b*, noise^2) for the quadratic bowl; no features.
Dataset make_bowl_targets(std::size_t n, std::size_t dim, double noise, std::uint64_t seed);

// Splits the first `head` rows from the rest.
std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t head);

// One worker's contiguous slice of the training set. Rows are visited in a
// fresh shuffled order every epoch, driven by the worker's own seed.
class DataShard {
 public:
  DataShard(const Dataset& data, int rank, int world_size, std::uint64_t worker_seed);

  const std::vector<std::size_t>& rows() const { return rows_; }
  Batch next_batch(std::size_t batch_size);

 private:
  void reshuffle();

  const Dataset* data_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace demo
