#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "subnet/autodiff.hpp"
#include "subnet/data.hpp"
#include "subnet/model.hpp"

namespace subnet {

// Per-channel mean and population standard deviation of the training split.
// Throws a degenerate error for channels with std < 1e-12.
Normalization fit_normalization(const IoDataset& train);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::map<ad::ParamId, std::vector<double>> m;
  std::map<ad::ParamId, std::vector<double>> v;
};

struct ParamBlock {
  ad::ParamId id;
  std::span<double> values;
};

// One bias-corrected Adam update of every block. Blocks without an entry in
// `grads` see a zero gradient. A non-finite gradient throws NumericError
// (index = block id) before any parameter or moment is changed.
void adam_step(AdamState& state, std::span<const ParamBlock> blocks, const ad::GradientMap& grads);

enum class ValidationMetric { simulation_nrms, encoder_loss };

const char* to_string(ValidationMetric m) noexcept;
ValidationMetric validation_metric_from_string(const std::string& name);

// How section initial states are obtained during training.
enum class InitStrategy {
  encoder,           // x_t = psi(past IO)
  trainable_states,  // one free state per section start, starting at zero
  full_record,       // a single free x_1 and one section spanning the record
};

const char* to_string(InitStrategy s) noexcept;

struct TrainConfig {
  ModelStructure structure;
  std::size_t horizon = 40;  // T
  std::size_t batch_size = 256;
  std::size_t spacing = 1;  // d
  AdamConfig adam;
  std::size_t max_epochs = 1000;
  std::size_t patience = 50;
  ValidationMetric validation = ValidationMetric::simulation_nrms;
  InitStrategy init = InitStrategy::encoder;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Wall-clock limit checked before each epoch; unset means unlimited.
  std::optional<double> time_budget_s;
  // When set, the best snapshot is written here on every improvement, so a
  // divergence leaves the last good model on disk.
  std::optional<std::filesystem::path> checkpoint;
  // Instead of throwing on a non-finite loss or gradient, warn and return the
  // best snapshot so far with stop reason "diverged".
  bool stop_on_divergence = false;
};

void validate(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_metric = 0.0;
  double wallclock_s = 0.0;  // elapsed since training started, after validation
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;  // 1-based
  double best_val_metric = 0.0;
  std::optional<std::filesystem::path> checkpoint;
  std::string stop_reason;  // "max_epochs", "patience", "time_budget", "callback", "diverged"
};

// Deterministic columns only (epoch, train_loss, val_metric, is_best), so
// repeated single-threaded runs produce byte-identical files.
void save_report_csv(const TrainReport& report, const std::filesystem::path& path);
// epoch, wallclock_s
void save_timing_csv(const TrainReport& report, const std::filesystem::path& path);

struct TrainResult {
  SubnetModel model;  // best-epoch snapshot (initial model when no epochs ran)
  TrainReport report;
};

// Called after each epoch with the record and the current best snapshot.
// Returning false ends training with stop reason "callback".
using EpochCallback = std::function<bool(const EpochRecord&, const SubnetModel& best)>;

// Xavier init, normalization from `train`, shuffled mini-batches with Adam,
// per-epoch validation and best-snapshot early stopping.
TrainResult train(const TrainConfig& config, const IoDataset& train, const IoDataset& val,
                  const EpochCallback& on_epoch = {});

}  // namespace subnet
