#include "demo/dct.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

namespace demo {

DctBasis build_basis(std::size_t n) {
  if (n == 0) throw ShapeMismatch("DCT size must be >= 1");
  DctBasis b;
  b.size = n;
  b.forward.resize(n * n);
  b.inverse.resize(n * n);
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const double ck = k == 0 ? 1.0 / std::numbers::sqrt2 : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double angle = std::numbers::pi * static_cast<double>((2 * i + 1) * k) /
                           (2.0 * static_cast<double>(n));
      b.forward[k * n + i] = scale * ck * std::cos(angle);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) b.inverse[i * n + k] = b.forward[k * n + i];
  }
  return b;
}

const DctBasis& BasisCache::get(std::size_t n) const {
  {
    std::shared_lock lock(mutex_);
    if (auto it = bases_.find(n); it != bases_.end()) return *it->second;
  }
  auto fresh = std::make_unique<const DctBasis>(build_basis(n));
  std::unique_lock lock(mutex_);
  auto [it, inserted] = bases_.try_emplace(n, std::move(fresh));
  return *it->second;
}

std::size_t BasisCache::size() const {
  std::shared_lock lock(mutex_);
  return bases_.size();
}

void transform_axis(std::span<double> block, const Shape& block_shape, std::size_t axis,
                    const DctBasis& basis, DctDirection direction) {
  if (axis >= block_shape.size()) throw ShapeMismatch("axis out of range");
  if (block.size() != volume(block_shape)) throw ShapeMismatch("block size does not match shape");
  const std::size_t n = block_shape[axis];
  if (basis.size != n) throw ShapeMismatch("basis size does not match axis length");
  if (n == 1) return;  // the 1-point transform is the identity

  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= block_shape[i];
  for (std::size_t i = axis + 1; i < block_shape.size(); ++i) inner *= block_shape[i];

  const std::vector<double>& m = direction == DctDirection::kForward ? basis.forward : basis.inverse;
  std::vector<double> scratch(n * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    double* slab = block.data() + o * n * inner;
    std::fill(scratch.begin(), scratch.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      double* out = scratch.data() + r * inner;
      const double* row = m.data() + r * n;
      for (std::size_t c = 0; c < n; ++c) {
        const double w = row[c];
        const double* in = slab + c * inner;
        for (std::size_t j = 0; j < inner; ++j) out[j] += w * in[j];
      }
    }
    std::copy(scratch.begin(), scratch.end(), slab);
  }
}

void transform_block(std::span<double> block, const Shape& block_shape, const BasisCache& cache,
                     DctDirection direction) {
  for (std::size_t axis = 0; axis < block_shape.size(); ++axis) {
    transform_axis(block, block_shape, axis, cache.get(block_shape[axis]), direction);
  }
}

namespace {

template <Real T>
DenseTensor<T> transform_tensor(const DenseTensor<T>& t, const BasisCache& cache,
                                DctDirection direction) {
  std::vector<double> work(t.data().begin(), t.data().end());
  transform_block(work, t.shape(), cache, direction);
  return DenseTensor<T>(t.shape(), std::vector<T>(work.begin(), work.end()));
}

}  // namespace

template <Real T>
DenseTensor<T> dct_forward_chunk(const DenseTensor<T>& chunk, const BasisCache& cache) {
  return transform_tensor(chunk, cache, DctDirection::kForward);
}

template <Real T>
DenseTensor<T> dct_inverse_chunk(const DenseTensor<T>& coeffs, const BasisCache& cache) {
  return transform_tensor(coeffs, cache, DctDirection::kInverse);
}

template DenseTensor<float> dct_forward_chunk(const DenseTensor<float>&, const BasisCache&);
template DenseTensor<double> dct_forward_chunk(const DenseTensor<double>&, const BasisCache&);
template DenseTensor<float> dct_inverse_chunk(const DenseTensor<float>&, const BasisCache&);
template DenseTensor<double> dct_inverse_chunk(const DenseTensor<double>&, const BasisCache&);

}  // namespace demo
