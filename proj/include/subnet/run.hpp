#pragma once

// JSON run configuration and the command implementations behind the CLI.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "subnet/baselines.hpp"
#include "subnet/data.hpp"
#include "subnet/optim.hpp"

namespace subnet {

struct DataConfig {
  // Exactly one source is used, in this order of precedence: a single record
  // split contiguously, three split files, or the simulated benchmark system.
  std::optional<std::filesystem::path> record_csv;
  std::vector<std::size_t> split;  // train, val, test lengths for record_csv
  std::optional<std::filesystem::path> train_csv, val_csv, test_csv;
  std::size_t n_u = 1;
  std::size_t n_y = 1;
  SimSystemConfig generator;
};

struct EvalConfig {
  std::optional<std::filesystem::path> checkpoint;  // default: <out>/model.ckpt
  std::string split = "test";                       // train, val or test
  std::size_t k_max = 100;
};

struct CompareConfig {
  std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::optional<double> budget_s;  // per variant; unset means train.time_budget_s
};

struct AnalyzeConfig {
  std::vector<std::size_t> horizons{4, 8, 16};
  std::size_t samples_per_T = 64;  // N = samples_per_T * T
  std::size_t trials = 2000;
  std::size_t g_sweep_max_T = 64;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  DataConfig data;
  TrainConfig train;  // train.structure holds the model section
  EvalConfig eval;
  CompareConfig compare;
  AnalyzeConfig analyze;
};

// Parses and validates a JSON document; unknown keys and type errors raise
// config errors naming the field path (e.g. "train.T").
RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& config);

// Resolves the data section into train/val/test splits.
DataSplits load_splits(const RunConfig& config);

struct RunOptions {
  std::filesystem::path out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  bool force = false;
  std::optional<std::size_t> k_max;  // overrides eval.k_max
  // Receives progress lines; they are also appended to <out>/run.log.
  std::function<void(const std::string&)> log;
};

// Each command writes the effective config to <out>/config.json and returns a
// short human-readable summary. Existing outputs are only replaced with force.
std::string cmd_generate(const RunConfig& config, const RunOptions& options);
std::string cmd_train(const RunConfig& config, const RunOptions& options);
std::string cmd_eval(const RunConfig& config, const RunOptions& options);
std::string cmd_compare(const RunConfig& config, const RunOptions& options);
std::string cmd_analyze(const RunConfig& config, const RunOptions& options);

}  // namespace subnet
