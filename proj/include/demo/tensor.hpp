#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "demo/errors.hpp"

namespace demo {

using Shape = std::vector<std::size_t>;

std::size_t volume(const Shape& shape);
std::string to_string(const Shape& shape);

template <class T>
concept Real = std::same_as<T, float> || std::same_as<T, double>;

// Dense n-d array, row-major. The element type is fixed by the template
// parameter; float is the training default, double is used by oracles.
template <Real T>
class DenseTensor {
 public:
  using value_type = T;

  DenseTensor() : shape_{1}, data_(1, T{0}) {}
  explicit DenseTensor(Shape shape, T fill = T{0});
  DenseTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T value);

  bool operator==(const DenseTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using TensorF32 = DenseTensor<float>;
using TensorF64 = DenseTensor<double>;

// Tiling of a tensor into equally sized contiguous blocks.
class ChunkGeometry {
 public:
  // Throws ShapeMismatch if ranks differ, NonDivisible if some chunk edge
  // does not divide the tensor edge.
  ChunkGeometry(Shape tensor_shape, Shape chunk_shape);

  const Shape& tensor_shape() const { return tensor_shape_; }
  const Shape& chunk_shape() const { return chunk_shape_; }
  const Shape& chunk_grid() const { return chunk_grid_; }

  std::size_t chunk_count() const { return volume(chunk_grid_); }
  std::size_t chunk_volume() const { return volume(chunk_shape_); }

  bool operator==(const ChunkGeometry&) const = default;

 private:
  Shape tensor_shape_;
  Shape chunk_shape_;
  Shape chunk_grid_;
};

// Per dimension, picks the largest divisor of n_i that is <= requested.
ChunkGeometry clamp_chunk_shape(const Shape& tensor_shape, std::size_t requested);

// Chunks stored back to back in row-major chunk-grid order; each chunk is
// itself row-major over chunk_shape.
template <Real T>
class ChunkedView {
 public:
  ChunkedView(ChunkGeometry geometry, std::vector<T> blocks);

  const ChunkGeometry& geometry() const { return geometry_; }
  std::size_t count() const { return geometry_.chunk_count(); }

  std::span<T> chunk(std::size_t i);
  std::span<const T> chunk(std::size_t i) const;
  DenseTensor<T> chunk_tensor(std::size_t i) const;

  std::span<const T> blocks() const { return blocks_; }

 private:
  ChunkGeometry geometry_;
  std::vector<T> blocks_;
};

template <Real T>
ChunkedView<T> chunk(const DenseTensor<T>& t, const ChunkGeometry& g);

template <Real T>
DenseTensor<T> unchunk(const ChunkedView<T>& view, const ChunkGeometry& g);

// Destination offsets mapping each row-major tensor element to its position
// in the chunked layout. Shared by chunk/unchunk and the compaction kernels.
std::vector<std::size_t> chunk_permutation(const ChunkGeometry& g);

}  // namespace demo
