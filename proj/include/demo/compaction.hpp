#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demo/dct.hpp"
#include "demo/tensor.hpp"

namespace demo {

// How duplicate frequency bins from several workers are combined.
enum class MergeRule {
  kContributorAverage,  // divide by the number of workers that selected the bin
  kWorldAverage,        // divide by the world size
};

// Top-k DCT coefficients of every chunk of one tensor.
//
// freq and ampl both have logical shape (chunk_grid..., k) and are stored
// row-major: chunk c owns entries [c*k, (c+1)*k). Indices are flattened
// row-major positions inside the chunk. Amplitudes are single precision,
// the same representation that goes over the wire.
struct CompressedComponents {
  std::uint32_t tensor_id = 0;
  ChunkGeometry geometry{{1}, {1}};
  std::size_t k = 1;
  std::vector<std::uint32_t> freq;
  std::vector<float> ampl;

  Shape shape() const;  // (chunk_grid..., k)

  bool operator==(const CompressedComponents&) const = default;
};

// Indices of the k largest |coeffs|, ordered by decreasing magnitude; equal
// magnitudes are ordered by lower index first. Throws InvalidK unless
// 1 <= k <= coeffs.size().
std::vector<std::uint32_t> select_topk(std::span<const double> coeffs, std::size_t k);

// Per-tensor k actually used when a requested k exceeds the chunk volume
// (small bias vectors): min(k, chunk_volume).
std::size_t effective_topk(std::size_t requested_k, const ChunkGeometry& g);

template <Real T>
struct Extraction {
  DenseTensor<T> fast;               // q: reconstruction from `components` alone
  CompressedComponents components;   // what gets synchronized
};

template <Real T>
Extraction<T> extract_fast_components(const DenseTensor<T>& m, const ChunkGeometry& g,
                                      std::size_t k, const BasisCache& cache,
                                      std::uint32_t tensor_id = 0);

// Scatters every worker's components into per-chunk coefficient blocks,
// averages duplicate bins according to `rule`, then inverse transforms and
// unchunks. Contributions are summed in list order.
template <Real T>
DenseTensor<T> merge_and_reconstruct(std::span<const CompressedComponents> all_workers,
                                     const ChunkGeometry& g, const BasisCache& cache,
                                     MergeRule rule = MergeRule::kContributorAverage);

}  // namespace demo
