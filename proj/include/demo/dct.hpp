#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

#include "demo/tensor.hpp"

namespace demo {

// Orthonormal DCT-II matrix of size N and its inverse (the transpose, i.e. DCT-III).
//
//   forward[k][n] = sqrt(2/N) * c_k * cos(pi * (2n + 1) * k / (2N)),
//   c_0 = 1/sqrt(2), c_k = 1 otherwise.
//
// Both matrices are stored row-major in double precision.
struct DctBasis {
  std::size_t size = 0;
  std::vector<double> forward;
  std::vector<double> inverse;

  double fwd(std::size_t k, std::size_t n) const { return forward[k * size + n]; }
  double inv(std::size_t n, std::size_t k) const { return inverse[n * size + k]; }
};

DctBasis build_basis(std::size_t n);

// Lazily populated map from edge length to basis. Safe to share between
// threads; each basis is built at most once and never evicted, so returned
// references stay valid for the cache's lifetime.
class BasisCache {
 public:
  const DctBasis& get(std::size_t n) const;
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  mutable std::map<std::size_t, std::unique_ptr<const DctBasis>> bases_;
};

enum class DctDirection { kForward, kInverse };

// Applies the 1-D transform along one axis of a row-major block, in place.
void transform_axis(std::span<double> block, const Shape& block_shape, std::size_t axis,
                    const DctBasis& basis, DctDirection direction);

// Separable d-dimensional transform of a row-major block, in place. Axes are
// processed from first to last.
void transform_block(std::span<double> block, const Shape& block_shape, const BasisCache& cache,
                     DctDirection direction);

// Whole-tensor transforms: the tensor is treated as one chunk. Accumulation
// happens in double regardless of T.
template <Real T>
DenseTensor<T> dct_forward_chunk(const DenseTensor<T>& chunk, const BasisCache& cache);

template <Real T>
DenseTensor<T> dct_inverse_chunk(const DenseTensor<T>& coeffs, const BasisCache& cache);

}  // namespace demo
