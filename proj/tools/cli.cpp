#include "demo/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "demo/bench.hpp"
#include "demo/config.hpp"
#include "demo/errors.hpp"
#include "demo/harness.hpp"
#include "demo/report.hpp"

namespace demo {

namespace fs = std::filesystem;

namespace {

fs::path out_root() {
  const char* env = std::getenv("DEMO_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

RunConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& s : sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

fs::path resolve_out(const std::string& out, const std::string& config, const char* fallback) {
  if (!out.empty()) return out;
  return out_root() / (config.empty() ? fs::path(fallback) : fs::path(config).stem());
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path.string());
  f << text;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

struct SweepArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::string> grid;
  std::string out;
};

struct PlotArgs {
  std::vector<std::string> csvs;
  std::string x = "step";
  std::string y = "train_loss";
  bool log_y = false;
  std::string out;
};

struct ReportArgs {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::size_t> k{1, 2, 4, 8, 16, 32};
  std::vector<std::size_t> s;
  std::string out;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(a.config, a.sets);
  const RunMetrics m = run_experiment(cfg);
  const fs::path dir = resolve_out(a.out, a.config, "train");
  write_run_outputs(m, dir);
  const StepRow& last = m.final_row();
  out << "steps " << cfg.run.steps << "  final_loss " << fixed(*last.full_loss, 6);
  if (last.heldout_acc && !std::isnan(*last.heldout_acc)) {
    out << "  heldout_acc " << fixed(*last.heldout_acc, 4);
  }
  out << "  payload_bytes/step " << last.payload_bytes << "  dense_bytes " << m.dense_bytes << '\n';
  if (!m.params_consistent) throw Error("worker parameters diverged");
  out << "wrote " << (dir / "metrics.csv").string() << '\n';
  return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const RunConfig base = load_with_overrides(a.config, a.sets);
  std::vector<SweepAxis> axes;
  for (const auto& g : a.grid) axes.push_back(parse_sweep_axis(g));
  const auto points = sweep(base, axes);
  std::ostringstream csv;
  write_sweep_csv(csv, axes, points);
  const fs::path dir = resolve_out(a.out, a.config, "sweep");
  write_file(dir / "summary.csv", csv.str());
  out << csv.str() << "wrote " << (dir / "summary.csv").string() << '\n';
  return kExitOk;
}

int cmd_bench(const CompactionBenchConfig& c, std::ostream& out) {
  const CompactionBenchResult r = bench_compaction(c);
  out << "signal " << c.signal << "  length " << c.length << "  chunk " << r.chunk << "  k "
      << r.k << "  trials " << r.trials << '\n';
  out << "dct      " << fixed(r.dct_fraction, 4) << " (sem " << fixed(r.dct_sem, 4) << ")\n";
  out << "identity " << fixed(r.identity_fraction, 4) << " (sem " << fixed(r.identity_sem, 4)
      << ")\n";
  return kExitOk;
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  std::vector<PlotSeries> series;
  for (const auto& path : a.csvs) series.push_back(read_csv_series(path, a.x, a.y));
  const fs::path target = a.out.empty() ? out_root() / "plot.svg" : fs::path(a.out);
  write_file(target, render_svg(series, a.x, a.y, a.log_y));
  out << "wrote " << target.string() << " (" << series.size() << " series)\n";
  return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const RunConfig cfg = load_with_overrides(a.config, a.sets);
  const Problem p = make_problem(cfg);
  std::vector<std::size_t> s = a.s;
  if (s.empty()) s = {cfg.optimizer.s, 2 * cfg.optimizer.s};
  const auto rows =
      data_tx_table(p.model->param_shapes(), s, a.k, static_cast<int>(cfg.run.workers));
  std::ostringstream csv;
  write_data_tx_csv(csv, rows);
  out << csv.str();
  if (!a.out.empty()) {
    write_file(a.out, csv.str());
    out << "wrote " << a.out << '\n';
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decoupled momentum training, benchmarks and reports", "demo"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run one experiment and write metrics CSVs");
  train_cmd->add_option("config", train.config, "Run config file");
  train_cmd->add_option("--set", train.sets, "Override, section.key=value (repeatable)");
  train_cmd->add_option("--out", train.out, "Output directory");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of experiments");
  sweep_cmd->add_option("config", sw.config, "Base run config file");
  sweep_cmd->add_option("--set", sw.sets, "Override, section.key=value (repeatable)");
  sweep_cmd->add_option("--grid", sw.grid, "Axis, section.key=v1,v2,... (repeatable)")->required();
  sweep_cmd->add_option("--out", sw.out, "Output directory");

  CompactionBenchConfig bench;
  auto* bench_cmd = app.add_subcommand("bench-compaction", "DCT versus identity top-k energy");
  bench_cmd->add_option("--signal", bench.signal, "ar1 | white | constant")
      ->check(CLI::IsMember({"ar1", "white", "constant"}));
  bench_cmd->add_option("--rho", bench.rho, "AR(1) correlation");
  bench_cmd->add_option("--length", bench.length, "Signal length");
  bench_cmd->add_option("--chunk", bench.chunk, "Chunk length");
  bench_cmd->add_option("--k", bench.k, "Coefficients kept per chunk");
  bench_cmd->add_option("--trials", bench.trials, "Number of random signals");
  bench_cmd->add_option("--seed", bench.seed, "RNG seed");

  PlotArgs plot;
  auto* plot_cmd = app.add_subcommand("plot", "Render metrics CSVs as an SVG line chart");
  plot_cmd->add_option("csv", plot.csvs, "Metrics CSV files")->required();
  plot_cmd->add_option("--x", plot.x, "X column");
  plot_cmd->add_option("--y", plot.y, "Y column");
  plot_cmd->add_flag("--log-y", plot.log_y, "Logarithmic y axis");
  plot_cmd->add_option("--out", plot.out, "Output SVG path");

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Per-step traffic table over k and s");
  report_cmd->add_option("config", report.config, "Run config file");
  report_cmd->add_option("--set", report.sets, "Override, section.key=value (repeatable)");
  report_cmd->add_option("--k", report.k, "k values")->delimiter(',');
  report_cmd->add_option("--s", report.s, "Chunk sizes (default s and 2s)")->delimiter(',');
  report_cmd->add_option("--out", report.out, "Also write the table to this CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train, out);
    if (*sweep_cmd) return cmd_sweep(sw, out);
    if (*bench_cmd) return cmd_bench(bench, out);
    if (*plot_cmd) return cmd_plot(plot, out);
    if (*report_cmd) return cmd_report(report, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TransportError& e) {
    err << "transport error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace demo
