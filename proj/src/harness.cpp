#include "demo/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "demo/optimizer.hpp"
#include "demo/tcp_collective.hpp"

namespace demo {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) {
  return v && !std::isnan(*v) ? fmt(*v) : std::string();
}

template <Real T>
std::vector<TensorF64> to_f64(const std::vector<DenseTensor<T>>& ts) {
  std::vector<TensorF64> out;
  out.reserve(ts.size());
  for (const auto& t : ts) {
    out.emplace_back(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  }
  return out;
}

template <Real T>
std::vector<DenseTensor<T>> from_f64(const std::vector<TensorF64>& ts) {
  std::vector<DenseTensor<T>> out;
  out.reserve(ts.size());
  for (const auto& t : ts) {
    out.emplace_back(t.shape(), std::vector<T>(t.values().begin(), t.values().end()));
  }
  return out;
}

template <Real T>
double norm(const std::vector<DenseTensor<T>>& ts) {
  double s = 0.0;
  for (const auto& t : ts) {
    for (T v : t.values()) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(s);
}

template <Real T>
std::uint64_t hash_params(const std::vector<DenseTensor<T>>& ts) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : ts) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(t.data().data());
    h = fnv1a({bytes, t.size() * sizeof(T)}, h);
  }
  return h;
}

DemoConfig demo_config(const OptimizerSettings& o) {
  DemoConfig c;
  c.learning_rate = o.lr;
  c.momentum_decay = o.effective_beta();
  c.chunk = o.s;
  c.topk = o.k;
  c.signum = o.signum;
  c.merge_rule = o.merge == "world" ? MergeRule::kWorldAverage : MergeRule::kContributorAverage;
  c.weight_decay = o.effective_weight_decay();
  return c;
}

BaselineConfig baseline_config(const OptimizerSettings& o) {
  BaselineConfig c;
  c.kind = o.kind == "sgd"      ? BaselineKind::kSgdMomentum
           : o.kind == "signum" ? BaselineKind::kSignum
                                : BaselineKind::kAdamW;
  c.learning_rate = o.lr;
  c.beta1 = o.effective_beta();
  c.beta2 = o.beta2;
  c.eps = o.eps;
  c.weight_decay = o.effective_weight_decay();
  return c;
}

bool is_eval_step(std::uint64_t step, const RunSettings& run) {
  return step == 0 || step == run.steps || (run.eval_every > 0 && step % run.eval_every == 0);
}

// Per-rank records filled by the worker threads, merged after join.
struct WorkerLog {
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<double> sync_norm;
  std::vector<std::uint64_t> payload;
  std::vector<std::uint64_t> param_hash;
};

struct Shared {
  const RunConfig* cfg;
  const Problem* problem;
  std::vector<TensorF64> init;
  std::vector<WorkerLog> logs;
  RunMetrics* metrics;
  const RunOptions* options;
};

template <Real T>
void evaluate(const Problem& p, const std::vector<DenseTensor<T>>& params, StepRow& row) {
  const auto x = to_f64(params);
  row.full_loss = p.model->loss(x, p.train);
  if (p.heldout.size() > 0) {
    row.heldout_loss = p.model->loss(x, p.heldout);
    row.heldout_acc = p.model->accuracy(x, p.heldout);
  }
}

template <Real T>
void worker(Shared& sh, int rank, Collective& coll) {
  const RunConfig& cfg = *sh.cfg;
  const Problem& problem = *sh.problem;
  const Model& model = *problem.model;
  const auto shapes = model.param_shapes();
  const bool lead = rank == 0;
  WorkerLog& log = sh.logs[static_cast<std::size_t>(rank)];

  DataShard shard(problem.train, rank, coll.world_size(), worker_seed(cfg.run.seed, rank));
  auto params = from_f64<T>(sh.init);
  std::vector<TensorF64> grads64;
  for (const auto& s : shapes) grads64.emplace_back(s);

  std::optional<DemoOptimizer<T>> demo_opt;
  std::optional<BaselineOptimizer<T>> base_opt;
  if (cfg.optimizer.kind == "demo") {
    demo_opt.emplace(demo_config(cfg.optimizer), shapes);
  } else {
    base_opt.emplace(baseline_config(cfg.optimizer), shapes);
  }

  if (lead) {
    RunMetrics& m = *sh.metrics;
    m.optimizer_state_elements =
        demo_opt ? demo_opt->state_elements() : base_opt->state_elements();
    evaluate(problem, params, m.rows[0]);
  }

  for (std::uint64_t step = 1; step <= cfg.run.steps; ++step) {
    const auto started = std::chrono::steady_clock::now();
    const Batch batch = shard.next_batch(cfg.data.batch);
    const auto x64 = to_f64(params);
    log.loss[step - 1] = model.loss_and_grad(x64, batch, grads64);
    auto grads = from_f64<T>(grads64);
    log.grad_norm[step - 1] = norm(grads);

    if (demo_opt) {
      const DemoStepStats stats = demo_opt->step(params, grads, coll);
      log.sync_norm[step - 1] = stats.sync_norm;
      log.payload[step - 1] = stats.payload_bytes;
    } else {
      coll.all_reduce_mean<T>(grads, static_cast<std::uint32_t>(step));
      base_opt->step(params, grads);
      log.sync_norm[step - 1] = norm(grads);
      log.payload[step - 1] = coll.ledger().steps().back().payload_bytes();
    }
    log.param_hash[step - 1] = hash_params(params);

    if (lead) {
      RunMetrics& m = *sh.metrics;
      m.step_seconds[step - 1] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (sh.options->record_trajectory) m.trajectory.push_back(to_f64(params));
      if (is_eval_step(step, cfg.run)) evaluate(problem, params, m.rows[step]);
    }
  }

  if (lead) {
    RunMetrics& m = *sh.metrics;
    m.final_params = to_f64(params);
    m.ledger = coll.ledger();
  }
}

// Runs `body(rank)` on one thread per rank. The first failure aborts the
// group (through `abort`) and is rethrown after every thread has joined.
template <class Body, class Abort>
void run_workers(int world, Body body, Abort abort) {
  std::mutex mu;
  std::exception_ptr first;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(world));
  for (int r = 0; r < world; ++r) {
    threads.emplace_back([&, r] {
      try {
        body(r);
      } catch (...) {
        {
          std::lock_guard lock(mu);
          if (!first) first = std::current_exception();
        }
        abort();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

template <Real T>
void run_typed(const RunConfig& cfg, const Problem& problem, const RunOptions& options,
               RunMetrics& metrics) {
  const int world = static_cast<int>(cfg.run.workers);
  Shared sh{&cfg, &problem, problem.model->init_params(init_seed(cfg.run.seed)), {}, &metrics,
            &options};
  sh.logs.resize(static_cast<std::size_t>(world));
  for (auto& log : sh.logs) {
    log.loss.resize(cfg.run.steps);
    log.grad_norm.resize(cfg.run.steps);
    log.sync_norm.resize(cfg.run.steps);
    log.payload.resize(cfg.run.steps);
    log.param_hash.resize(cfg.run.steps);
  }
  const auto timeout = std::chrono::milliseconds(
      static_cast<std::int64_t>(std::llround(cfg.transport.timeout_s * 1000.0)));

  if (cfg.transport.kind == "tcp") {
    std::vector<TcpListener> listeners;
    std::vector<Endpoint> endpoints;
    for (int r = 0; r < world; ++r) {
      const auto port = cfg.transport.base_port == 0
                            ? std::uint16_t{0}
                            : static_cast<std::uint16_t>(cfg.transport.base_port + r);
      listeners.emplace_back(cfg.transport.host, port);
      endpoints.push_back({cfg.transport.host, listeners.back().port()});
    }
    run_workers(
        world,
        [&](int r) {
          TcpCollective coll(r, endpoints, std::move(listeners[static_cast<std::size_t>(r)]),
                             timeout);
          worker<T>(sh, r, coll);
        },
        [] {});
  } else {
    auto hub = std::make_shared<InMemoryHub>(world, timeout);
    run_workers(
        world,
        [&](int r) {
          InMemoryCollective coll(hub, r);
          worker<T>(sh, r, coll);
        },
        [&] { hub->abort(); });
  }

  for (std::uint64_t step = 1; step <= cfg.run.steps; ++step) {
    StepRow& row = metrics.rows[step];
    row.step = step;
    double loss = 0.0, gnorm = 0.0;
    for (const auto& log : sh.logs) {
      loss += log.loss[step - 1];
      gnorm += log.grad_norm[step - 1];
      if (log.param_hash[step - 1] != sh.logs[0].param_hash[step - 1]) {
        metrics.params_consistent = false;
      }
    }
    row.train_loss = loss / world;
    row.grad_norm = gnorm / world;
    row.sync_norm = sh.logs[0].sync_norm[step - 1];
    row.payload_bytes = sh.logs[0].payload[step - 1];
    const StepTraffic& t = metrics.ledger.steps()[step - 1];
    row.bytes_sent = t.bytes_sent;
    row.bytes_received = t.bytes_received;
    metrics.gather_digests.push_back(t.digest);
  }
  if (!metrics.rows.empty()) metrics.rows[0].train_loss = *metrics.rows[0].full_loss;
}

}  // namespace

std::uint64_t data_seed(std::uint64_t seed) { return splitmix(seed ^ 0x64617461ull); }
std::uint64_t init_seed(std::uint64_t seed) { return splitmix(seed ^ 0x696e6974ull); }
std::uint64_t worker_seed(std::uint64_t seed, int rank) {
  return seed + static_cast<std::uint64_t>(rank);
}

Problem make_problem(const RunConfig& cfg) {
  const auto& d = cfg.data;
  const auto& m = cfg.model;
  const std::size_t n = d.samples + d.heldout;
  const std::uint64_t seed = data_seed(d.seed.value_or(cfg.run.seed));
  Problem p;
  Dataset all;
  if (m.kind == "quadratic") {
    p.model = std::make_unique<QuadraticBowl>(QuadraticBowl::random(d.features, seed));
    all = make_bowl_targets(n, d.features, d.noise, seed + 1);
  } else if (m.kind == "linear") {
    p.model = std::make_unique<LinearRegression>(d.features, d.outputs, m.bias);
    all = make_linear_teacher(n, d.features, d.outputs, d.noise, seed);
  } else {
    if (m.kind == "logistic") {
      p.model = std::make_unique<LogisticRegression>(d.features, d.classes, m.bias);
    } else {
      std::vector<std::size_t> hidden{m.hidden};
      if (m.hidden2 > 0) hidden.push_back(m.hidden2);
      p.model = std::make_unique<Mlp>(d.features, hidden, d.classes,
                                      m.activation == "relu" ? Activation::kRelu : Activation::kTanh,
                                      m.bias);
    }
    all = make_blobs(n, d.features, d.classes, d.separation, d.noise, seed);
  }
  std::tie(p.train, p.heldout) = split(all, d.samples);
  return p;
}

RunMetrics run_experiment(const RunConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const Problem problem = make_problem(cfg);

  RunMetrics metrics;
  metrics.config = cfg;
  metrics.rows.resize(cfg.run.steps + 1);
  metrics.step_seconds.resize(cfg.run.steps);
  for (const auto& s : problem.model->param_shapes()) {
    metrics.geometries.push_back(clamp_chunk_shape(s, cfg.optimizer.s));
  }
  metrics.dense_bytes = dense_gradient_bytes(metrics.geometries);
  if (cfg.optimizer.kind == "demo") {
    metrics.analytic_payload_bytes =
        bytes_per_step(metrics.geometries, cfg.optimizer.k, static_cast<int>(cfg.run.workers))
            .payload_bytes;
  }

  if (cfg.run.dtype == "f64") {
    run_typed<double>(cfg, problem, options, metrics);
  } else {
    run_typed<float>(cfg, problem, options, metrics);
  }
  return metrics;
}

void RunMetrics::write_csv(std::ostream& os) const {
  os << "step,train_loss,grad_norm,sync_norm,payload_bytes,bytes_sent,bytes_received,"
        "full_loss,heldout_loss,heldout_acc\n";
  for (const auto& r : rows) {
    os << r.step << ',' << fmt(r.train_loss) << ',' << fmt(r.grad_norm) << ','
       << fmt(r.sync_norm) << ',' << r.payload_bytes << ',' << r.bytes_sent << ','
       << r.bytes_received << ',' << fmt(r.full_loss) << ',' << fmt(r.heldout_loss) << ','
       << fmt(r.heldout_acc) << '\n';
  }
}

void RunMetrics::write_timing_csv(std::ostream& os) const {
  os << "step,seconds\n";
  for (std::size_t i = 0; i < step_seconds.size(); ++i) {
    os << i + 1 << ',' << fmt(step_seconds[i]) << '\n';
  }
}

void write_run_outputs(const RunMetrics& metrics, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    metrics.write_csv(f);
  }
  {
    auto f = open("ledger.csv");
    metrics.ledger.write_csv(f);
  }
  {
    auto f = open("timing.csv");
    metrics.write_timing_csv(f);
  }
  {
    auto f = open("config.ini");
    f << to_config_text(metrics.config);
  }
}

SweepAxis parse_sweep_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("grid axis must look like section.key=v1,v2,..., got '" + text + "'");
  }
  SweepAxis axis;
  axis.key = text.substr(0, eq);
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty value in grid axis '" + text + "'");
    axis.values.push_back(item);
  }
  if (axis.values.empty()) throw ConfigError("grid axis '" + text + "' has no values");
  RunConfig probe;
  apply_override(probe, axis.key + "=" + axis.values.front());
  return axis;
}

std::vector<SweepPoint> sweep(const RunConfig& base, const std::vector<SweepAxis>& axes) {
  if (axes.empty()) throw ConfigError("sweep grid is empty");
  std::vector<SweepPoint> points;
  std::vector<std::size_t> index(axes.size(), 0);
  while (true) {
    RunConfig cfg = base;
    SweepPoint point;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& value = axes[a].values[index[a]];
      apply_override(cfg, axes[a].key + "=" + value);
      point.assignments.emplace_back(axes[a].key, value);
    }
    const RunMetrics m = run_experiment(cfg);
    const StepRow& last = m.final_row();
    point.final_loss = *last.full_loss;
    point.heldout_loss = last.heldout_loss.value_or(std::nan(""));
    point.heldout_acc = last.heldout_acc.value_or(std::nan(""));
    point.payload_bytes = last.payload_bytes;
    point.bytes_sent = last.bytes_sent;
    point.dense_bytes = m.dense_bytes;
    points.push_back(std::move(point));

    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < axes[a].values.size()) break;
      index[a] = 0;
      if (a == 0) return points;
    }
  }
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepAxis>& axes,
                     const std::vector<SweepPoint>& points) {
  for (const auto& a : axes) os << a.key << ',';
  os << "final_loss,heldout_loss,heldout_acc,payload_bytes,bytes_sent,dense_bytes\n";
  for (const auto& p : points) {
    for (const auto& kv : p.assignments) os << kv.second << ',';
    os << fmt(p.final_loss) << ',' << fmt(std::optional<double>(p.heldout_loss)) << ','
       << fmt(std::optional<double>(p.heldout_acc)) << ',' << p.payload_bytes << ','
       << p.bytes_sent << ',' << p.dense_bytes << '\n';
  }
}

}  // namespace demo
