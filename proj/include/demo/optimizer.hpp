#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "demo/collective.hpp"
#include "demo/compaction.hpp"
#include "demo/dct.hpp"
#include "demo/tensor.hpp"

namespace demo {

// Elementwise sign with sign(0) = 0.
template <Real T>
DenseTensor<T> sign(const DenseTensor<T>& t);

struct DemoConfig {
  double learning_rate = 1e-3;
  double momentum_decay = 0.999;
  std::size_t chunk = 64;  // requested chunk edge s, clamped per dimension
  std::size_t topk = 8;
  bool signum = true;
  MergeRule merge_rule = MergeRule::kContributorAverage;
  double weight_decay = 0.0;

  void validate() const;  // throws ConfigError
};

template <Real T>
struct DemoParamState {
  std::uint32_t tensor_id = 0;
  DenseTensor<T> momentum;
  ChunkGeometry geometry{{1}, {1}};
  std::size_t k = 1;  // effective k for this tensor
  std::uint64_t step_count = 0;
};

struct DemoStepStats {
  double sync_norm = 0.0;           // ||Q|| over all tensors
  std::uint64_t payload_bytes = 0;  // this worker's index + amplitude bytes
};

// Decoupled momentum optimizer for one worker. Each step:
//
//   m <- beta*m + g                 (local gradient, no all-reduce)
//   q, c <- top-k DCT components of m
//   m <- m - q
//   Q <- merge(all_gather(c))
//   x <- x*(1 - lr*wd);  x <- x - lr*Q   (or lr*sign(Q))
//
// Workers stay parameter-identical because every rank applies the same Q.
template <Real T>
class DemoOptimizer {
 public:
  DemoOptimizer(DemoConfig cfg, const std::vector<Shape>& param_shapes,
                std::shared_ptr<const BasisCache> cache = nullptr);

  DemoStepStats step(std::span<DenseTensor<T>> params, std::span<const DenseTensor<T>> grads,
                     Collective& collective);

  const DemoConfig& config() const { return cfg_; }
  const std::vector<DemoParamState<T>>& states() const { return states_; }
  std::vector<ChunkGeometry> geometries() const;

  // Number of persistent optimizer-state elements: one momentum per parameter.
  std::size_t state_elements() const;

 private:
  DemoConfig cfg_;
  std::shared_ptr<const BasisCache> cache_;
  std::vector<DemoParamState<T>> states_;
  std::uint32_t step_ = 0;
};

// Single-tensor form of the step, for callers that hold one parameter.
template <Real T>
DemoStepStats demo_step(DemoParamState<T>& state, DenseTensor<T>& params,
                        const DenseTensor<T>& local_grad, const DemoConfig& cfg,
                        Collective& collective, const BasisCache& cache);

enum class BaselineKind { kSgdMomentum, kSignum, kAdamW };

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kSgdMomentum;
  double learning_rate = 1e-3;
  double beta1 = 0.9;  // momentum for SGD / Signum, first moment for AdamW
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

// Fully synchronized reference optimizers; they consume the all-reduced mean
// gradient.
//
//   SGD-momentum: m <- beta1*m + g;                 x <- x - lr*m
//   Signum:       m <- beta1*m + (1-beta1)*g;       x <- x - lr*sign(m)
//   AdamW:        bias-corrected Adam moments;      x <- x - lr*m_hat/(sqrt(v_hat)+eps)
//
// Decoupled weight decay x <- x*(1 - lr*wd) precedes each update.
template <Real T>
class BaselineOptimizer {
 public:
  BaselineOptimizer(BaselineConfig cfg, const std::vector<Shape>& param_shapes);

  void step(std::span<DenseTensor<T>> params, std::span<const DenseTensor<T>> mean_grads);

  const BaselineConfig& config() const { return cfg_; }
  std::size_t state_elements() const;
  std::uint64_t step_count() const { return t_; }

 private:
  BaselineConfig cfg_;
  std::vector<DenseTensor<T>> first_;
  std::vector<DenseTensor<T>> second_;  // AdamW only
  std::uint64_t t_ = 0;
};

}  // namespace demo
