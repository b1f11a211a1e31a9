#include "demo/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

namespace demo {

std::size_t volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeMismatch("tensor shape must have at least one dimension");
  for (std::size_t n : shape) {
    if (n == 0) throw ShapeMismatch("tensor dimensions must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

template <Real T>
DenseTensor<T>::DenseTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(volume(shape_), fill);
}

template <Real T>
DenseTensor<T>::DenseTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != volume(shape_)) {
    throw ShapeMismatch("data length " + std::to_string(data_.size()) +
                        " does not match shape " + to_string(shape_));
  }
}

template <Real T>
void DenseTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

ChunkGeometry::ChunkGeometry(Shape tensor_shape, Shape chunk_shape)
    : tensor_shape_(std::move(tensor_shape)), chunk_shape_(std::move(chunk_shape)) {
  check_shape(tensor_shape_);
  if (chunk_shape_.size() != tensor_shape_.size()) {
    throw ShapeMismatch("chunk shape " + to_string(chunk_shape_) + " has a different rank than " +
                        to_string(tensor_shape_));
  }
  chunk_grid_.resize(tensor_shape_.size());
  for (std::size_t i = 0; i < tensor_shape_.size(); ++i) {
    const std::size_t s = chunk_shape_[i];
    if (s == 0 || tensor_shape_[i] % s != 0) {
      throw NonDivisible("chunk edge " + std::to_string(s) + " does not divide dimension " +
                         std::to_string(i) + " of " + to_string(tensor_shape_));
    }
    chunk_grid_[i] = tensor_shape_[i] / s;
  }
}

ChunkGeometry clamp_chunk_shape(const Shape& tensor_shape, std::size_t requested) {
  if (requested == 0) throw NonDivisible("requested chunk size must be >= 1");
  Shape chunk(tensor_shape.size());
  for (std::size_t i = 0; i < tensor_shape.size(); ++i) {
    std::size_t s = std::min(requested, tensor_shape[i]);
    while (s > 1 && tensor_shape[i] % s != 0) --s;
    chunk[i] = std::max<std::size_t>(s, 1);
  }
  return ChunkGeometry(tensor_shape, std::move(chunk));
}

std::vector<std::size_t> chunk_permutation(const ChunkGeometry& g) {
  const Shape& n = g.tensor_shape();
  const Shape& s = g.chunk_shape();
  const Shape& grid = g.chunk_grid();
  const std::size_t d = n.size();
  const std::size_t chunk_vol = g.chunk_volume();

  // Row-major strides inside a chunk and across the chunk grid.
  std::vector<std::size_t> in_stride(d, 1), grid_stride(d, 1);
  for (std::size_t i = d; i-- > 1;) {
    in_stride[i - 1] = in_stride[i] * s[i];
    grid_stride[i - 1] = grid_stride[i] * grid[i];
  }

  // offset[i][c] is dimension i's contribution for coordinate c.
  std::vector<std::vector<std::size_t>> offset(d);
  for (std::size_t i = 0; i < d; ++i) {
    offset[i].resize(n[i]);
    for (std::size_t c = 0; c < n[i]; ++c) {
      offset[i][c] = (c / s[i]) * grid_stride[i] * chunk_vol + (c % s[i]) * in_stride[i];
    }
  }

  std::vector<std::size_t> perm(volume(n));
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t flat = 0; flat < perm.size(); ++flat) {
    std::size_t dest = 0;
    for (std::size_t i = 0; i < d; ++i) dest += offset[i][idx[i]];
    perm[flat] = dest;
    for (std::size_t i = d; i-- > 0;) {
      if (++idx[i] < n[i]) break;
      idx[i] = 0;
    }
  }
  return perm;
}

template <Real T>
ChunkedView<T>::ChunkedView(ChunkGeometry geometry, std::vector<T> blocks)
    : geometry_(std::move(geometry)), blocks_(std::move(blocks)) {
  if (blocks_.size() != volume(geometry_.tensor_shape())) {
    throw ShapeMismatch("chunked storage has " + std::to_string(blocks_.size()) +
                        " elements, geometry expects " +
                        std::to_string(volume(geometry_.tensor_shape())));
  }
}

template <Real T>
std::span<T> ChunkedView<T>::chunk(std::size_t i) {
  const std::size_t v = geometry_.chunk_volume();
  return std::span<T>(blocks_).subspan(i * v, v);
}

template <Real T>
std::span<const T> ChunkedView<T>::chunk(std::size_t i) const {
  const std::size_t v = geometry_.chunk_volume();
  return std::span<const T>(blocks_).subspan(i * v, v);
}

template <Real T>
DenseTensor<T> ChunkedView<T>::chunk_tensor(std::size_t i) const {
  auto c = chunk(i);
  return DenseTensor<T>(geometry_.chunk_shape(), std::vector<T>(c.begin(), c.end()));
}

template <Real T>
ChunkedView<T> chunk(const DenseTensor<T>& t, const ChunkGeometry& g) {
  if (g.tensor_shape() != t.shape()) {
    throw ShapeMismatch("geometry is for " + to_string(g.tensor_shape()) + " but tensor is " +
                        to_string(t.shape()));
  }
  const auto perm = chunk_permutation(g);
  std::vector<T> blocks(t.size());
  for (std::size_t i = 0; i < perm.size(); ++i) blocks[perm[i]] = t[i];
  return ChunkedView<T>(g, std::move(blocks));
}

template <Real T>
DenseTensor<T> unchunk(const ChunkedView<T>& view, const ChunkGeometry& g) {
  if (view.geometry() != g) throw ShapeMismatch("chunked view was built with another geometry");
  const auto perm = chunk_permutation(g);
  const auto blocks = view.blocks();
  std::vector<T> data(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) data[i] = blocks[perm[i]];
  return DenseTensor<T>(g.tensor_shape(), std::move(data));
}

template class DenseTensor<float>;
template class DenseTensor<double>;
template class ChunkedView<float>;
template class ChunkedView<double>;
template ChunkedView<float> chunk(const DenseTensor<float>&, const ChunkGeometry&);
template ChunkedView<double> chunk(const DenseTensor<double>&, const ChunkGeometry&);
template DenseTensor<float> unchunk(const ChunkedView<float>&, const ChunkGeometry&);
template DenseTensor<double> unchunk(const ChunkedView<double>&, const ChunkGeometry&);

}  // namespace demo
