#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demo/collective.hpp"
#include "demo/config.hpp"
#include "demo/data.hpp"
#include "demo/models.hpp"
#include "demo/tensor.hpp"

namespace demo {

// Seeds derived from run.seed (the dataset uses data.seed when set). Worker r
// draws batches from `seed + r`.
std::uint64_t data_seed(std::uint64_t seed);
std::uint64_t init_seed(std::uint64_t seed);
std::uint64_t worker_seed(std::uint64_t seed, int rank);

struct Problem {
  std::unique_ptr<Model> model;
  Dataset train;
  Dataset heldout;
};

Problem make_problem(const RunConfig& cfg);

// One row of metrics.csv. Row 0 is the initial evaluation; eval columns are
// empty on steps that are not evaluated.
struct StepRow {
  std::uint64_t step = 0;
  double train_loss = 0.0;      // mean of the workers' batch losses
  double grad_norm = 0.0;       // mean of the workers' local gradient norms
  double sync_norm = 0.0;       // norm of the applied synchronized direction
  std::uint64_t payload_bytes = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::optional<double> full_loss;
  std::optional<double> heldout_loss;
  std::optional<double> heldout_acc;
};

struct RunMetrics {
  RunConfig config;
  std::vector<StepRow> rows;
  std::vector<double> step_seconds;       // wall clock per step, rank 0
  CommLedger ledger;                      // rank 0
  std::vector<std::uint64_t> gather_digests;  // rank 0, one per step
  std::vector<ChunkGeometry> geometries;
  std::uint64_t analytic_payload_bytes = 0;  // DeMo only
  std::uint64_t dense_bytes = 0;             // 4 bytes per parameter
  bool params_consistent = true;             // all ranks bit-identical after every step
  std::size_t optimizer_state_elements = 0;
  std::vector<TensorF64> final_params;
  std::vector<std::vector<TensorF64>> trajectory;  // rank 0 after each step, on request

  const StepRow& final_row() const { return rows.back(); }
  double final_loss() const { return *rows.back().full_loss; }

  // Columns: step,train_loss,grad_norm,sync_norm,payload_bytes,bytes_sent,
  // bytes_received,full_loss,heldout_loss,heldout_acc
  void write_csv(std::ostream& os) const;
  void write_timing_csv(std::ostream& os) const;
};

struct RunOptions {
  bool record_trajectory = false;
};

RunMetrics run_experiment(const RunConfig& cfg, const RunOptions& options = {});

// Writes metrics.csv, ledger.csv, timing.csv and config.ini into `dir`.
void write_run_outputs(const RunMetrics& metrics, const std::filesystem::path& dir);

// A sweep axis such as `optimizer.k=1,2,4`.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

SweepAxis parse_sweep_axis(const std::string& text);

struct SweepPoint {
  std::vector<std::pair<std::string, std::string>> assignments;
  double final_loss = 0.0;
  double heldout_loss = 0.0;
  double heldout_acc = 0.0;
  std::uint64_t payload_bytes = 0;  // per step and worker
  std::uint64_t bytes_sent = 0;     // per step and worker
  std::uint64_t dense_bytes = 0;
};

// Runs the cartesian product of the axes, first axis varying slowest.
std::vector<SweepPoint> sweep(const RunConfig& base, const std::vector<SweepAxis>& axes);

void write_sweep_csv(std::ostream& os, const std::vector<SweepAxis>& axes,
                     const std::vector<SweepPoint>& points);

}  // namespace demo
