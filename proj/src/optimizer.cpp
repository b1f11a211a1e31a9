#include "demo/optimizer.hpp"

#include <cmath>
#include <string>

namespace demo {

template <Real T>
DenseTensor<T> sign(const DenseTensor<T>& t) {
  DenseTensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[i] = static_cast<T>((t[i] > T{0}) - (t[i] < T{0}));
  }
  return out;
}

void DemoConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum_decay > 0.0 && momentum_decay < 1.0)) {
    throw ConfigError("momentum decay must lie in (0, 1)");
  }
  if (chunk < 1) throw ConfigError("chunk size must be >= 1");
  if (topk < 1) throw ConfigError("k must be >= 1");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

void BaselineConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (kind == BaselineKind::kAdamW && !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("beta2 must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

namespace {

template <Real T>
void check_same_shape(const DenseTensor<T>& a, const DenseTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(what) + ": " + to_string(a.shape()) + " vs " +
                        to_string(b.shape()));
  }
}

// Momentum accumulation, extraction and residual update for one tensor.
template <Real T>
CompressedComponents accumulate_and_extract(DemoParamState<T>& s, const DenseTensor<T>& grad,
                                            const DemoConfig& cfg, const BasisCache& cache) {
  check_same_shape(s.momentum, grad, "gradient does not match momentum");
  const T beta = static_cast<T>(cfg.momentum_decay);
  for (std::size_t i = 0; i < grad.size(); ++i) s.momentum[i] = beta * s.momentum[i] + grad[i];
  auto ex = extract_fast_components(s.momentum, s.geometry, s.k, cache, s.tensor_id);
  for (std::size_t i = 0; i < grad.size(); ++i) s.momentum[i] -= ex.fast[i];
  return std::move(ex.components);
}

// Merges the gathered components of one tensor and applies the update.
// Returns ||Q||^2 for this tensor.
template <Real T>
double apply_update(DemoParamState<T>& s, DenseTensor<T>& x,
                    const std::vector<SyncPayload>& gathered, std::size_t entry,
                    const DemoConfig& cfg, const BasisCache& cache) {
  std::vector<CompressedComponents> all;
  all.reserve(gathered.size());
  for (const auto& p : gathered) {
    if (entry >= p.entries.size() || p.entries[entry].tensor_id != s.tensor_id) {
      throw GeometryMismatch("rank " + std::to_string(p.rank) + " sent no entry for tensor " +
                             std::to_string(s.tensor_id));
    }
    all.push_back(to_components(p.entries[entry], s.geometry, s.k));
  }
  const DenseTensor<T> q = merge_and_reconstruct<T>(all, s.geometry, cache, cfg.merge_rule);

  const T lr = static_cast<T>(cfg.learning_rate);
  if (cfg.weight_decay > 0.0) {
    const T decay = static_cast<T>(1.0 - cfg.learning_rate * cfg.weight_decay);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] *= decay;
  }
  double norm2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T qi = q[i];
    norm2 += static_cast<double>(qi) * static_cast<double>(qi);
    const T dir = cfg.signum ? static_cast<T>((qi > T{0}) - (qi < T{0})) : qi;
    x[i] -= lr * dir;
  }
  ++s.step_count;
  return norm2;
}

template <Real T>
DemoParamState<T> make_state(std::uint32_t id, const Shape& shape, const DemoConfig& cfg) {
  DemoParamState<T> s;
  s.tensor_id = id;
  s.momentum = DenseTensor<T>(shape);
  s.geometry = clamp_chunk_shape(shape, cfg.chunk);
  s.k = effective_topk(cfg.topk, s.geometry);
  return s;
}

}  // namespace

template <Real T>
DemoOptimizer<T>::DemoOptimizer(DemoConfig cfg, const std::vector<Shape>& param_shapes,
                                std::shared_ptr<const BasisCache> cache)
    : cfg_(cfg), cache_(cache ? std::move(cache) : std::make_shared<const BasisCache>()) {
  cfg_.validate();
  states_.reserve(param_shapes.size());
  for (std::size_t i = 0; i < param_shapes.size(); ++i) {
    states_.push_back(make_state<T>(static_cast<std::uint32_t>(i), param_shapes[i], cfg_));
  }
}

template <Real T>
std::vector<ChunkGeometry> DemoOptimizer<T>::geometries() const {
  std::vector<ChunkGeometry> out;
  out.reserve(states_.size());
  for (const auto& s : states_) out.push_back(s.geometry);
  return out;
}

template <Real T>
std::size_t DemoOptimizer<T>::state_elements() const {
  std::size_t n = 0;
  for (const auto& s : states_) n += s.momentum.size();
  return n;
}

template <Real T>
DemoStepStats DemoOptimizer<T>::step(std::span<DenseTensor<T>> params,
                                     std::span<const DenseTensor<T>> grads,
                                     Collective& collective) {
  if (params.size() != states_.size() || grads.size() != states_.size()) {
    throw ShapeMismatch("optimizer holds " + std::to_string(states_.size()) +
                        " tensors, got " + std::to_string(params.size()) + " params and " +
                        std::to_string(grads.size()) + " grads");
  }
  ++step_;
  SyncPayload payload;
  payload.rank = static_cast<std::uint16_t>(collective.rank());
  payload.step = step_;
  payload.entries.reserve(states_.size());
  DemoStepStats stats;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    check_same_shape(params[i], states_[i].momentum, "parameter does not match optimizer state");
    payload.entries.push_back(to_entry(accumulate_and_extract(states_[i], grads[i], cfg_, *cache_)));
    stats.payload_bytes += payload.entries.back().data_bytes();
  }

  const auto gathered = collective.all_gather(payload);

  double norm2 = 0.0;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    norm2 += apply_update(states_[i], params[i], gathered, i, cfg_, *cache_);
  }
  stats.sync_norm = std::sqrt(norm2);
  return stats;
}

template <Real T>
DemoStepStats demo_step(DemoParamState<T>& state, DenseTensor<T>& params,
                        const DenseTensor<T>& local_grad, const DemoConfig& cfg,
                        Collective& collective, const BasisCache& cache) {
  cfg.validate();
  check_same_shape(params, state.momentum, "parameter does not match optimizer state");
  SyncPayload payload;
  payload.rank = static_cast<std::uint16_t>(collective.rank());
  payload.step = static_cast<std::uint32_t>(state.step_count + 1);
  payload.entries.push_back(to_entry(accumulate_and_extract(state, local_grad, cfg, cache)));
  DemoStepStats stats;
  stats.payload_bytes = payload.entries.back().data_bytes();
  const auto gathered = collective.all_gather(payload);
  stats.sync_norm = std::sqrt(apply_update(state, params, gathered, 0, cfg, cache));
  return stats;
}

template <Real T>
BaselineOptimizer<T>::BaselineOptimizer(BaselineConfig cfg, const std::vector<Shape>& param_shapes)
    : cfg_(cfg) {
  cfg_.validate();
  for (const auto& shape : param_shapes) {
    first_.emplace_back(shape);
    if (cfg_.kind == BaselineKind::kAdamW) second_.emplace_back(shape);
  }
}

template <Real T>
std::size_t BaselineOptimizer<T>::state_elements() const {
  std::size_t n = 0;
  for (const auto& t : first_) n += t.size();
  for (const auto& t : second_) n += t.size();
  return n;
}

template <Real T>
void BaselineOptimizer<T>::step(std::span<DenseTensor<T>> params,
                                std::span<const DenseTensor<T>> mean_grads) {
  if (params.size() != first_.size() || mean_grads.size() != first_.size()) {
    throw ShapeMismatch("baseline optimizer got the wrong number of tensors");
  }
  ++t_;
  const double lr = cfg_.learning_rate;
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const T decay = static_cast<T>(1.0 - lr * cfg_.weight_decay);

  for (std::size_t i = 0; i < params.size(); ++i) {
    DenseTensor<T>& x = params[i];
    const DenseTensor<T>& g = mean_grads[i];
    check_same_shape(x, first_[i], "parameter does not match optimizer state");
    check_same_shape(x, g, "gradient does not match parameter");
    DenseTensor<T>& m = first_[i];
    if (cfg_.weight_decay > 0.0) {
      for (std::size_t j = 0; j < x.size(); ++j) x[j] *= decay;
    }
    switch (cfg_.kind) {
      case BaselineKind::kSgdMomentum:
        for (std::size_t j = 0; j < x.size(); ++j) {
          m[j] = static_cast<T>(b1) * m[j] + g[j];
          x[j] -= static_cast<T>(lr) * m[j];
        }
        break;
      case BaselineKind::kSignum:
        for (std::size_t j = 0; j < x.size(); ++j) {
          m[j] = static_cast<T>(b1) * m[j] + static_cast<T>(1.0 - b1) * g[j];
          x[j] -= static_cast<T>(lr) * static_cast<T>((m[j] > T{0}) - (m[j] < T{0}));
        }
        break;
      case BaselineKind::kAdamW: {
        DenseTensor<T>& v = second_[i];
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double gj = static_cast<double>(g[j]);
          const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
          const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
          m[j] = static_cast<T>(mj);
          v[j] = static_cast<T>(vj);
          const double update = (mj / bias1) / (std::sqrt(vj / bias2) + cfg_.eps);
          x[j] = static_cast<T>(static_cast<double>(x[j]) - lr * update);
        }
        break;
      }
    }
  }
}

template DenseTensor<float> sign(const DenseTensor<float>&);
template DenseTensor<double> sign(const DenseTensor<double>&);
template class DemoOptimizer<float>;
template class DemoOptimizer<double>;
template class BaselineOptimizer<float>;
template class BaselineOptimizer<double>;
template DemoStepStats demo_step(DemoParamState<float>&, DenseTensor<float>&,
                                 const DenseTensor<float>&, const DemoConfig&, Collective&,
                                 const BasisCache&);
template DemoStepStats demo_step(DemoParamState<double>&, DenseTensor<double>&,
                                 const DenseTensor<double>&, const DemoConfig&, Collective&,
                                 const BasisCache&);

}  // namespace demo
