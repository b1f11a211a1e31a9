#include "demo/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "demo/errors.hpp"

namespace demo {

Batch gather_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
  Batch b;
  b.features = data.features;
  b.target_dim = data.target_dim;
  b.classes = data.classes;
  b.x.reserve(rows.size() * data.features);
  b.targets.reserve(rows.size() * data.target_dim);
  for (std::size_t r : rows) {
    b.x.insert(b.x.end(), data.x.begin() + r * data.features,
               data.x.begin() + (r + 1) * data.features);
    if (data.target_dim) {
      b.targets.insert(b.targets.end(), data.targets.begin() + r * data.target_dim,
                       data.targets.begin() + (r + 1) * data.target_dim);
    }
    if (data.classes) b.labels.push_back(data.labels[r]);
  }
  return b;
}

Dataset make_blobs(std::size_t n, std::size_t features, std::size_t classes, double separation,
                   double noise, std::uint64_t seed) {
  if (features == 0 || classes < 2) throw Error("blobs need features >= 1 and classes >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(classes - 1));

  std::vector<double> centers(classes * features);
  for (auto& c : centers) c = separation * normal(rng);

  Dataset d;
  d.features = features;
  d.classes = classes;
  d.x.resize(n * features);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = pick(rng);
    d.labels[i] = label;
    for (std::size_t j = 0; j < features; ++j) {
      d.x[i * features + j] = centers[label * features + j] + noise * normal(rng);
    }
  }
  return d;
}

Dataset make_linear_teacher(std::size_t n, std::size_t features, std::size_t outputs, double noise,
                            std::uint64_t seed) {
  if (features == 0 || outputs == 0) throw Error("linear teacher needs features and outputs >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(features));
  std::vector<double> w(outputs * features), b(outputs);
  for (auto& v : w) v = w_scale * normal(rng);
  for (auto& v : b) v = 0.1 * normal(rng);

  Dataset d;
  d.features = features;
  d.target_dim = outputs;
  d.x.resize(n * features);
  d.targets.resize(n * outputs);
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = d.x.data() + i * features;
    for (std::size_t j = 0; j < features; ++j) xi[j] = normal(rng);
    for (std::size_t o = 0; o < outputs; ++o) {
      double y = b[o];
      for (std::size_t j = 0; j < features; ++j) y += w[o * features + j] * xi[j];
      d.targets[i * outputs + o] = y + noise * normal(rng);
    }
  }
  return d;
}

Dataset make_bowl_targets(std::size_t n, std::size_t dim, double noise, std::uint64_t seed) {
  if (dim == 0) throw Error("bowl dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> center(dim);
  for (auto& c : center) c = normal(rng);

  Dataset d;
  d.features = 1;  // unused column so rows can be counted and sharded
  d.target_dim = dim;
  d.x.assign(n, 0.0);
  d.targets.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) d.targets[i * dim + j] = center[j] + noise * normal(rng);
  }
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t head) {
  head = std::min(head, data.size());
  std::vector<std::size_t> a(head), b(data.size() - head);
  std::iota(a.begin(), a.end(), std::size_t{0});
  std::iota(b.begin(), b.end(), head);
  return {gather_rows(data, a), gather_rows(data, b)};
}

DataShard::DataShard(const Dataset& data, int rank, int world_size, std::uint64_t worker_seed)
    : data_(&data), rng_(worker_seed) {
  const std::size_t n = data.size();
  const std::size_t w = static_cast<std::size_t>(world_size);
  const std::size_t r = static_cast<std::size_t>(rank);
  const std::size_t begin = r * n / w;
  const std::size_t end = (r + 1) * n / w;
  if (begin == end) throw Error("worker " + std::to_string(rank) + " received an empty shard");
  rows_.resize(end - begin);
  std::iota(rows_.begin(), rows_.end(), begin);
  order_ = rows_;
  reshuffle();
}

void DataShard::reshuffle() {
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Batch DataShard::next_batch(std::size_t batch_size) {
  std::vector<std::size_t> picked;
  picked.reserve(batch_size);
  while (picked.size() < batch_size) {
    if (cursor_ == order_.size()) reshuffle();
    picked.push_back(order_[cursor_++]);
  }
  return gather_rows(*data_, picked);
}

}  // namespace demo
