#include "demo/compaction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace demo {

Shape CompressedComponents::shape() const {
  Shape s = geometry.chunk_grid();
  s.push_back(k);
  return s;
}

std::vector<std::uint32_t> select_topk(std::span<const double> coeffs, std::size_t k) {
  if (k < 1 || k > coeffs.size()) {
    throw InvalidK("k=" + std::to_string(k) + " outside [1, " + std::to_string(coeffs.size()) +
                   "]");
  }
  std::vector<std::uint32_t> order(coeffs.size());
  std::iota(order.begin(), order.end(), 0u);
  auto stronger = [&](std::uint32_t a, std::uint32_t b) {
    const double ma = std::abs(coeffs[a]);
    const double mb = std::abs(coeffs[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    stronger);
  order.resize(k);
  return order;
}

std::size_t effective_topk(std::size_t requested_k, const ChunkGeometry& g) {
  return std::min(requested_k, g.chunk_volume());
}

template <Real T>
Extraction<T> extract_fast_components(const DenseTensor<T>& m, const ChunkGeometry& g,
                                      std::size_t k, const BasisCache& cache,
                                      std::uint32_t tensor_id) {
  if (g.tensor_shape() != m.shape()) {
    throw ShapeMismatch("geometry is for " + to_string(g.tensor_shape()) + " but momentum is " +
                        to_string(m.shape()));
  }
  const std::size_t vol = g.chunk_volume();
  if (k < 1 || k > vol) {
    throw InvalidK("k=" + std::to_string(k) + " outside [1, " + std::to_string(vol) + "]");
  }

  const auto perm = chunk_permutation(g);
  std::vector<double> blocks(m.size());
  for (std::size_t i = 0; i < perm.size(); ++i) blocks[perm[i]] = static_cast<double>(m[i]);

  CompressedComponents c;
  c.tensor_id = tensor_id;
  c.geometry = g;
  c.k = k;
  c.freq.reserve(g.chunk_count() * k);
  c.ampl.reserve(g.chunk_count() * k);
  for (std::size_t chunk = 0; chunk < g.chunk_count(); ++chunk) {
    std::span<double> block(blocks.data() + chunk * vol, vol);
    transform_block(block, g.chunk_shape(), cache, DctDirection::kForward);
    for (std::uint32_t bin : select_topk(block, k)) {
      c.freq.push_back(bin);
      c.ampl.push_back(static_cast<float>(block[bin]));
    }
  }

  // The local q goes through exactly the path a receiver takes.
  DenseTensor<T> q = merge_and_reconstruct<T>(std::span<const CompressedComponents>(&c, 1), g,
                                              cache, MergeRule::kContributorAverage);
  return Extraction<T>{std::move(q), std::move(c)};
}

template <Real T>
DenseTensor<T> merge_and_reconstruct(std::span<const CompressedComponents> all_workers,
                                     const ChunkGeometry& g, const BasisCache& cache,
                                     MergeRule rule) {
  if (all_workers.empty()) throw Error("merge needs at least one worker's components");
  const CompressedComponents& first = all_workers.front();
  const std::size_t k = first.k;
  const std::size_t vol = g.chunk_volume();
  const std::size_t chunks = g.chunk_count();
  for (const auto& c : all_workers) {
    if (c.geometry != g) throw GeometryMismatch("components were extracted with another geometry");
    if (c.tensor_id != first.tensor_id) throw GeometryMismatch("components mix tensor ids");
    if (c.k != k) throw KMismatch("workers disagree on k");
    if (c.freq.size() != chunks * k || c.ampl.size() != chunks * k) {
      throw GeometryMismatch("component arrays do not match chunk_count * k");
    }
  }

  std::vector<double> sums(chunks * vol, 0.0);
  std::vector<std::uint32_t> counts(chunks * vol, 0);
  // Stamp of the last worker that touched a bin, to reject duplicate indices.
  std::vector<std::size_t> seen(chunks * vol, 0);
  std::size_t stamp = 0;
  for (const auto& c : all_workers) {
    ++stamp;
    for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t e = chunk * k + j;
        const std::uint32_t bin = c.freq[e];
        if (bin >= vol) throw GeometryMismatch("frequency index " + std::to_string(bin) +
                                               " exceeds chunk volume " + std::to_string(vol));
        const std::size_t slot = chunk * vol + bin;
        if (seen[slot] == stamp) throw GeometryMismatch("duplicate frequency index in one chunk");
        seen[slot] = stamp;
        sums[slot] += static_cast<double>(c.ampl[e]);
        counts[slot] += 1;
      }
    }
  }

  const double world = static_cast<double>(all_workers.size());
  for (std::size_t slot = 0; slot < sums.size(); ++slot) {
    if (counts[slot] == 0) continue;
    sums[slot] /= rule == MergeRule::kContributorAverage ? static_cast<double>(counts[slot]) : world;
  }

  for (std::size_t chunk = 0; chunk < chunks; ++chunk) {
    transform_block(std::span<double>(sums.data() + chunk * vol, vol), g.chunk_shape(), cache,
                    DctDirection::kInverse);
  }

  const auto perm = chunk_permutation(g);
  std::vector<T> out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = static_cast<T>(sums[perm[i]]);
  return DenseTensor<T>(g.tensor_shape(), std::move(out));
}

template Extraction<float> extract_fast_components(const DenseTensor<float>&, const ChunkGeometry&,
                                                   std::size_t, const BasisCache&, std::uint32_t);
template Extraction<double> extract_fast_components(const DenseTensor<double>&,
                                                    const ChunkGeometry&, std::size_t,
                                                    const BasisCache&, std::uint32_t);
template DenseTensor<float> merge_and_reconstruct(std::span<const CompressedComponents>,
                                                  const ChunkGeometry&, const BasisCache&,
                                                  MergeRule);
template DenseTensor<double> merge_and_reconstruct(std::span<const CompressedComponents>,
                                                   const ChunkGeometry&, const BasisCache&,
                                                   MergeRule);

}  // namespace demo
