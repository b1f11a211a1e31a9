#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "demo/data.hpp"
#include "demo/tensor.hpp"

namespace demo {

// Differentiable model with closed-form gradients. Computation is done in
// double; trainers working in float convert at the boundary.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual std::vector<Shape> param_shapes() const = 0;
  virtual std::vector<TensorF64> init_params(std::uint64_t seed) const = 0;

  // Mean loss over the batch; fills `grads` (same layout as params) when non-empty.
  virtual double loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                               std::span<TensorF64> grads) const = 0;

  double loss(std::span<const TensorF64> params, const Batch& batch) const {
    return loss_and_grad(params, batch, {});
  }

  // Fraction of correctly classified rows; NaN for regression models.
  virtual double accuracy(std::span<const TensorF64> params, const Batch& batch) const;
};

// x -> 1/2 x^T A x - mean(b_i)^T x, where b_i are the batch's target rows.
class QuadraticBowl final : public Model {
 public:
  // `a` is a dim x dim symmetric positive definite matrix, row-major.
  QuadraticBowl(std::size_t dim, std::vector<double> a);
  static QuadraticBowl random(std::size_t dim, std::uint64_t seed);

  std::string name() const override { return "quadratic"; }
  std::vector<Shape> param_shapes() const override { return {{dim_}}; }
  std::vector<TensorF64> init_params(std::uint64_t seed) const override;
  double loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                       std::span<TensorF64> grads) const override;

 private:
  std::size_t dim_;
  std::vector<double> a_;
};

// Multi-output least squares: 1/2 mean ||W x + b - y||^2.
class LinearRegression final : public Model {
 public:
  LinearRegression(std::size_t features, std::size_t outputs, bool bias = true);

  std::string name() const override { return "linear"; }
  std::vector<Shape> param_shapes() const override;
  std::vector<TensorF64> init_params(std::uint64_t seed) const override;
  double loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                       std::span<TensorF64> grads) const override;

 private:
  std::size_t features_, outputs_;
  bool bias_;
};

enum class Activation { kTanh, kRelu };

// Softmax classifier with zero or more hidden layers. With no hidden layers
// this is multinomial logistic regression. Parameters are ordered
// W_1, b_1, ..., W_out, b_out (biases omitted when disabled), with
// W_l of shape (fan_out, fan_in).
class Mlp : public Model {
 public:
  Mlp(std::size_t features, std::vector<std::size_t> hidden, std::size_t classes,
      Activation activation = Activation::kTanh, bool bias = true);

  std::string name() const override;
  std::vector<Shape> param_shapes() const override;
  std::vector<TensorF64> init_params(std::uint64_t seed) const override;
  double loss_and_grad(std::span<const TensorF64> params, const Batch& batch,
                       std::span<TensorF64> grads) const override;
  double accuracy(std::span<const TensorF64> params, const Batch& batch) const override;

 private:
  // Forward pass keeping every layer's pre- and post-activation values.
  void forward(std::span<const TensorF64> params, const Batch& batch,
               std::vector<std::vector<double>>& pre, std::vector<std::vector<double>>& post) const;

  std::vector<std::size_t> widths_;  // features, hidden..., classes
  Activation activation_;
  bool bias_;
};

class LogisticRegression final : public Mlp {
 public:
  LogisticRegression(std::size_t features, std::size_t classes, bool bias = true)
      : Mlp(features, {}, classes, Activation::kTanh, bias) {}

  std::string name() const override { return "logistic"; }
  std::vector<TensorF64> init_params(std::uint64_t seed) const override;
};

// Worst relative error between central differences (step h) and the analytic
// gradient over `probes` random coordinates, at randomly perturbed parameters.
double finite_difference_check(const Model& model, const Batch& batch, std::size_t probes,
                               std::uint64_t seed, double h = 1e-4);

}  // namespace demo
