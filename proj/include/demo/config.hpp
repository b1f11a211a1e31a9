#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "demo/errors.hpp"

namespace demo {

// Run configuration. On disk it is a sectioned `key = value` file:
//
//   # comment
//   [optimizer]
//   kind = "demo"
//   k = 8
//
// Values are booleans (true/false), integers, reals or double-quoted
// strings. Unknown sections and keys are rejected.

struct ModelConfig {
  std::string kind = "mlp";  // quadratic | linear | logistic | mlp
  std::size_t hidden = 64;
  std::size_t hidden2 = 0;  // 0 = single hidden layer
  std::string activation = "tanh";  // tanh | relu
  bool bias = true;
};

struct DataConfig {
  std::size_t samples = 8192;
  std::size_t heldout = 2048;
  std::size_t features = 32;
  std::size_t classes = 8;   // classifiers
  std::size_t outputs = 4;   // linear regression targets
  double separation = 1.0;
  double noise = 1.0;
  std::size_t batch = 64;    // per worker
  std::optional<std::uint64_t> seed;  // dataset seed; derived from run.seed when unset
};

struct OptimizerSettings {
  std::string kind = "demo";  // demo | sgd | signum | adamw
  double lr = 1e-3;
  std::optional<double> beta;  // demo 0.999, others 0.9
  double beta2 = 0.95;
  double eps = 1e-8;
  std::optional<double> weight_decay;  // adamw 0.1, others 0
  std::size_t s = 64;
  std::size_t k = 8;
  bool signum = true;
  std::string merge = "contributor";  // contributor | world

  double effective_beta() const;
  double effective_weight_decay() const;
};

struct TransportSettings {
  std::string kind = "memory";  // memory | tcp
  std::string host = "127.0.0.1";
  std::size_t base_port = 0;    // 0 picks ephemeral ports; otherwise rank r listens on base+r
  double timeout_s = 30.0;
};

struct RunSettings {
  std::size_t workers = 4;
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 100;  // 0 = only initial and final
  std::string dtype = "f32";     // f32 | f64
};

struct RunConfig {
  ModelConfig model;
  DataConfig data;
  OptimizerSettings optimizer;
  TransportSettings transport;
  RunSettings run;

  void validate() const;  // throws ConfigError
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Applies `section.key=value`. Strings may be given without quotes here.
void apply_override(RunConfig& cfg, std::string_view assignment);

// Canonical text form; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& cfg);

// Names of every accepted `section.key`.
std::vector<std::string> config_keys();

}  // namespace demo
