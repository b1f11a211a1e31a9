#include "demo/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace demo {

namespace {

void check_params(std::span<const TensorF64> params, const std::vector<Shape>& shapes) {
  if (params.size() != shapes.size()) {
    throw ShapeMismatch("model expects " + std::to_string(shapes.size()) + " tensors, got " +
                        std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (params[i].shape() != shapes[i]) {
      throw ShapeMismatch("parameter " + std::to_string(i) + " has shape " +
                          to_string(params[i].shape()) + ", expected " + to_string(shapes[i]));
    }
  }
}

void reset_grads(std::span<TensorF64> grads, const std::vector<Shape>& shapes) {
  if (grads.empty()) return;
  if (grads.size() != shapes.size()) throw ShapeMismatch("gradient buffer count mismatch");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (grads[i].shape() != shapes[i]) grads[i] = TensorF64(shapes[i]);
    grads[i].fill(0.0);
  }
}

}  // namespace

double Model::accuracy(std::span<const TensorF64>, const Batch&) const {
  return std::numeric_limits<double>::quiet_NaN();
}

// --- QuadraticBowl ----------------------------------------------------------

QuadraticBowl::QuadraticBowl(std::size_t dim, std::vector<double> a) : dim_(dim), a_(std::move(a)) {
  if (dim_ == 0 || a_.size() != dim_ * dim_) throw ShapeMismatch("bowl matrix must be dim x dim");
  for (std::size_t i = 0; i < dim_; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (a_[i * dim_ + j] != a_[j * dim_ + i]) throw Error("bowl matrix must be symmetric");
    }
  }
}

QuadraticBowl QuadraticBowl::random(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> m(dim * dim);
  for (auto& v : m) v = normal(rng);
  std::vector<double> a(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += m[i * dim + k] * m[j * dim + k];
      a[i * dim + j] = s / static_cast<double>(dim) + (i == j ? 0.5 : 0.0);
    }
  }
  return QuadraticBowl(dim, std::move(a));
}

std::vector<TensorF64> QuadraticBowl::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  TensorF64 x({dim_});
  for (std::size_t i = 0; i < dim_; ++i) x[i] = normal(rng);
  return {x};
}

double QuadraticBowl::loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                                    std::span<TensorF64> grads) const {
  const auto shapes = param_shapes();
  check_params(params, shapes);
  reset_grads(grads, shapes);
  const TensorF64& x = params[0];

  std::vector<double> b(dim_, 0.0);
  const std::size_t n = batch.size();
  if (n > 0 && batch.target_dim == dim_) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < dim_; ++j) b[j] += batch.targets[r * dim_ + j];
    }
    for (auto& v : b) v /= static_cast<double>(n);
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) {
    double ax = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) ax += a_[i * dim_ + j] * x[j];
    loss += 0.5 * x[i] * ax - b[i] * x[i];
    if (!grads.empty()) grads[0][i] = ax - b[i];
  }
  return loss;
}

// --- LinearRegression -------------------------------------------------------

LinearRegression::LinearRegression(std::size_t features, std::size_t outputs, bool bias)
    : features_(features), outputs_(outputs), bias_(bias) {
  if (features == 0 || outputs == 0) throw ShapeMismatch("linear model needs non-empty dims");
}

std::vector<Shape> LinearRegression::param_shapes() const {
  std::vector<Shape> s{{outputs_, features_}};
  if (bias_) s.push_back({outputs_});
  return s;
}

std::vector<TensorF64> LinearRegression::init_params(std::uint64_t) const {
  std::vector<TensorF64> p;
  for (const auto& s : param_shapes()) p.emplace_back(s);
  return p;
}

double LinearRegression::loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                                       std::span<TensorF64> grads) const {
  const auto shapes = param_shapes();
  check_params(params, shapes);
  reset_grads(grads, shapes);
  if (batch.features != features_ || batch.target_dim != outputs_) {
    throw ShapeMismatch("batch does not match the linear model's dimensions");
  }
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const TensorF64& w = params[0];
  double loss = 0.0;
  std::vector<double> resid(outputs_);
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = batch.x.data() + r * features_;
    for (std::size_t o = 0; o < outputs_; ++o) {
      double y = bias_ ? params[1][o] : 0.0;
      for (std::size_t j = 0; j < features_; ++j) y += w[o * features_ + j] * x[j];
      resid[o] = y - batch.targets[r * outputs_ + o];
      loss += 0.5 * resid[o] * resid[o];
    }
    if (grads.empty()) continue;
    for (std::size_t o = 0; o < outputs_; ++o) {
      const double d = resid[o] * inv_n;
      for (std::size_t j = 0; j < features_; ++j) grads[0][o * features_ + j] += d * x[j];
      if (bias_) grads[1][o] += d;
    }
  }
  return loss * inv_n;
}

// --- Mlp ----------------------------------------------------------------------

Mlp::Mlp(std::size_t features, std::vector<std::size_t> hidden, std::size_t classes,
         Activation activation, bool bias)
    : activation_(activation), bias_(bias) {
  if (features == 0 || classes < 2) throw ShapeMismatch("classifier needs features and >= 2 classes");
  widths_.push_back(features);
  for (std::size_t h : hidden) {
    if (h == 0) throw ShapeMismatch("hidden width must be >= 1");
    widths_.push_back(h);
  }
  widths_.push_back(classes);
}

std::string Mlp::name() const { return "mlp"; }

std::vector<Shape> Mlp::param_shapes() const {
  std::vector<Shape> s;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    s.push_back({widths_[l + 1], widths_[l]});
    if (bias_) s.push_back({widths_[l + 1]});
  }
  return s;
}

std::vector<TensorF64> Mlp::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<TensorF64> p;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    TensorF64 w({widths_[l + 1], widths_[l]});
    const double scale = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * normal(rng);
    p.push_back(std::move(w));
    if (bias_) p.emplace_back(Shape{widths_[l + 1]});
  }
  return p;
}

void Mlp::forward(std::span<const TensorF64> params, const Batch& batch,
                  std::vector<std::vector<double>>& pre,
                  std::vector<std::vector<double>>& post) const {
  const std::size_t layers = widths_.size() - 1;
  const std::size_t n = batch.size();
  pre.assign(layers, {});
  post.assign(layers + 1, {});
  post[0] = batch.x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const TensorF64& w = params[bias_ ? 2 * l : l];
    const TensorF64* b = bias_ ? &params[2 * l + 1] : nullptr;
    std::vector<double>& z = pre[l];
    z.assign(n * out, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* h = post[l].data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        double s = b ? (*b)[o] : 0.0;
        const double* wr = w.data().data() + o * in;
        for (std::size_t j = 0; j < in; ++j) s += wr[j] * h[j];
        z[r * out + o] = s;
      }
    }
    if (l + 1 == layers) {
      post[l + 1] = z;  // logits
    } else {
      post[l + 1].resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        post[l + 1][i] = activation_ == Activation::kTanh ? std::tanh(z[i]) : std::max(z[i], 0.0);
      }
    }
  }
}

double Mlp::loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                          std::span<TensorF64> grads) const {
  const auto shapes = param_shapes();
  check_params(params, shapes);
  reset_grads(grads, shapes);
  if (batch.features != widths_.front() || batch.classes == 0) {
    throw ShapeMismatch("batch does not match the classifier's input");
  }
  const std::size_t n = batch.size();
  const std::size_t layers = widths_.size() - 1;
  const std::size_t classes = widths_.back();
  std::vector<std::vector<double>> pre, post;
  forward(params, batch, pre, post);

  // Softmax cross-entropy; delta holds dL/dlogits.
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> delta(n * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = post[layers].data() + r * classes;
    const double zmax = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    const std::uint32_t y = batch.labels[r];
    loss += lse - z[y];
    for (std::size_t c = 0; c < classes; ++c) {
      delta[r * classes + c] = (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  if (grads.empty()) return loss * inv_n;

  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const TensorF64& w = params[bias_ ? 2 * l : l];
    TensorF64& gw = grads[bias_ ? 2 * l : l];
    for (std::size_t r = 0; r < n; ++r) {
      const double* h = post[l].data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[r * out + o];
        if (d == 0.0) continue;
        double* gr = gw.data().data() + o * in;
        for (std::size_t j = 0; j < in; ++j) gr[j] += d * h[j];
        if (bias_) grads[2 * l + 1][o] += d;
      }
    }
    if (l == 0) break;
    std::vector<double> next(n * in, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[r * out + o];
        if (d == 0.0) continue;
        const double* wr = w.data().data() + o * in;
        for (std::size_t j = 0; j < in; ++j) next[r * in + j] += d * wr[j];
      }
    }
    const std::vector<double>& z = pre[l - 1];
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (activation_ == Activation::kTanh) {
        const double t = std::tanh(z[i]);
        next[i] *= 1.0 - t * t;
      } else if (z[i] <= 0.0) {
        next[i] = 0.0;
      }
    }
    delta = std::move(next);
  }
  return loss * inv_n;
}

double Mlp::accuracy(std::span<const TensorF64> params, const Batch& batch) const {
  check_params(params, param_shapes());
  std::vector<std::vector<double>> pre, post;
  forward(params, batch, pre, post);
  const std::size_t classes = widths_.back();
  const std::size_t n = batch.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = post.back().data() + r * classes;
    const auto best = static_cast<std::uint32_t>(std::max_element(z, z + classes) - z);
    if (best == batch.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<TensorF64> LogisticRegression::init_params(std::uint64_t) const {
  std::vector<TensorF64> p;
  for (const auto& s : param_shapes()) p.emplace_back(s);
  return p;
}

// --- gradient check ---------------------------------------------------------------

double finite_difference_check(const Model& model, const Batch& batch, std::size_t probes,
                               std::uint64_t seed, double h) {
  if (probes == 0) throw Error("finite difference check needs at least one probe");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<TensorF64> params = model.init_params(seed);
  for (auto& t : params) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += normal(rng);
  }
  std::vector<TensorF64> grads;
  for (const auto& t : params) grads.emplace_back(t.shape());
  model.loss_and_grad(params, batch, grads);

  std::size_t total = 0;
  for (const auto& t : params) total += t.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);

  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    std::size_t flat = pick(rng), tensor = 0;
    while (flat >= params[tensor].size()) flat -= params[tensor++].size();
    const double saved = params[tensor][flat];
    params[tensor][flat] = saved + h;
    const double up = model.loss(params, batch);
    params[tensor][flat] = saved - h;
    const double down = model.loss(params, batch);
    params[tensor][flat] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = grads[tensor][flat];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

}  // namespace demo
