#include "subnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "subnet/analysis.hpp"
#include "subnet/error.hpp"
#include "subnet/log.hpp"
#include "subnet/loss.hpp"
#include "subnet/rng.hpp"

namespace subnet {

using Eigen::Index;

namespace {

void channel_stats(const Eigen::MatrixXd& m, const char* prefix, Eigen::VectorXd& mean,
                   Eigen::VectorXd& std_dev) {
  mean.resize(m.cols());
  std_dev.resize(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    mean(c) = m.col(c).mean();
    std_dev(c) = std::sqrt((m.col(c).array() - mean(c)).square().mean());
    if (!(std_dev(c) >= 1e-12)) {
      fail(ErrorKind::degenerate, std::string("channel ") + prefix + std::to_string(c + 1) +
                                      " is constant (std < 1e-12); cannot normalize");
    }
  }
}

}  // namespace

Normalization fit_normalization(const IoDataset& train) {
  require(train.size() > 0, "fit_normalization: empty training data");
  validate(train);
  Normalization n;
  channel_stats(train.u, "u", n.u_mean, n.u_std);
  channel_stats(train.y, "y", n.y_mean, n.y_std);
  return n;
}

void adam_step(AdamState& state, std::span<const ParamBlock> blocks,
               const ad::GradientMap& grads) {
  for (const ParamBlock& b : blocks) {
    auto it = grads.find(b.id);
    if (it == grads.end()) continue;
    require(it->second.size() == b.values.size(),
            "adam_step: gradient size mismatch for block " + std::to_string(b.id));
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      if (!std::isfinite(it->second[i])) {
        throw NumericError("non-finite gradient in parameter block " + std::to_string(b.id) +
                               " at component " + std::to_string(i),
                           static_cast<std::size_t>(b.id));
      }
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (const ParamBlock& b : blocks) {
    auto& m = state.m[b.id];
    auto& v = state.v[b.id];
    if (m.empty()) {
      m.assign(b.values.size(), 0.0);
      v.assign(b.values.size(), 0.0);
    }
    require(m.size() == b.values.size(),
            "adam_step: block " + std::to_string(b.id) + " changed size");
    auto it = grads.find(b.id);
    const std::vector<double>* g = it == grads.end() ? nullptr : &it->second;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      b.values[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

const char* to_string(ValidationMetric m) noexcept {
  switch (m) {
    case ValidationMetric::simulation_nrms: return "simulation-nrms";
    case ValidationMetric::encoder_loss: return "encoder-loss";
  }
  return "unknown";
}

ValidationMetric validation_metric_from_string(const std::string& name) {
  if (name == "simulation-nrms") return ValidationMetric::simulation_nrms;
  if (name == "encoder-loss") return ValidationMetric::encoder_loss;
  fail(ErrorKind::config,
       "unknown validation metric '" + name + "' (expected simulation-nrms or encoder-loss)");
}

const char* to_string(InitStrategy s) noexcept {
  switch (s) {
    case InitStrategy::encoder: return "encoder";
    case InitStrategy::trainable_states: return "trainable-states";
    case InitStrategy::full_record: return "full-record";
  }
  return "unknown";
}

void validate(const TrainConfig& c) {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) fail(ErrorKind::config, std::string(name) + " must be >= 1");
  };
  positive(c.structure.n_x, "n_x");
  positive(c.horizon, "T");
  positive(c.batch_size, "batch_size");
  positive(c.spacing, "spacing");
  positive(c.patience, "patience");
  positive(c.threads, "threads");
  if (!(c.adam.learning_rate > 0.0)) fail(ErrorKind::config, "learning_rate must be > 0");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0 && c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) {
    fail(ErrorKind::config, "Adam betas must lie in [0, 1)");
  }
  if (!(c.adam.epsilon > 0.0)) fail(ErrorKind::config, "Adam epsilon must be > 0");
  if (c.time_budget_s && !(*c.time_budget_s >= 0.0)) {
    fail(ErrorKind::config, "time budget must be >= 0");
  }
  if (c.validation == ValidationMetric::encoder_loss && c.init != InitStrategy::encoder) {
    fail(ErrorKind::config, "encoder-loss validation needs the encoder init strategy");
  }
}

void save_report_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "epoch,train_loss,val_metric,is_best\n";
  char buf[96];
  for (const EpochRecord& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d\n", e.epoch, e.train_loss, e.val_metric,
                  report.best_epoch == e.epoch ? 1 : 0);
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

void save_timing_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "epoch,wallclock_s\n";
  char buf[64];
  for (const EpochRecord& e : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", e.epoch, e.wallclock_s);
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

TrainResult train(const TrainConfig& config, const IoDataset& train_data, const IoDataset& val,
                  const EpochCallback& on_epoch) {
  using Clock = std::chrono::steady_clock;
  const auto t_start = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t_start).count(); };

  validate(config);
  validate(train_data);
  validate(val);
  if (train_data.n_u() != val.n_u() || train_data.n_y() != val.n_y()) {
    fail(ErrorKind::config, "train and validation channel counts differ: (" +
                                std::to_string(train_data.n_u()) + ", " +
                                std::to_string(train_data.n_y()) + ") vs (" +
                                std::to_string(val.n_u()) + ", " + std::to_string(val.n_y()) + ")");
  }

  const Normalization norm = fit_normalization(train_data);
  SubnetModel model =
      make_model(config.structure, train_data.n_u(), train_data.n_y(), norm, config.seed);
  model.has_encoder = config.init == InitStrategy::encoder;
  const IoDataset normalized = norm.normalize(train_data);
  const IoDataset val_normalized = norm.normalize(val);

  IndexSet index_set;
  switch (config.init) {
    case InitStrategy::encoder:
      index_set = valid_starts(normalized.size(), config.horizon, model.n_a, model.n_b,
                               config.spacing);
      break;
    case InitStrategy::trainable_states:
      index_set = valid_starts(normalized.size(), config.horizon, 0, 0, config.spacing);
      break;
    case InitStrategy::full_record:
      index_set.starts = {0};
      index_set.horizon = normalized.size();
      index_set.spacing = normalized.size();
      break;
  }
  const std::size_t horizon = index_set.horizon;

  IndexSet val_set;
  if (config.validation == ValidationMetric::encoder_loss) {
    val_set = valid_starts(val.size(), config.horizon, model.n_a, model.n_b, 1);
  } else if (val.size() <= model.lag()) {
    fail(ErrorKind::config, "validation record (" + std::to_string(val.size()) +
                                " samples) is not longer than the encoder lag " +
                                std::to_string(model.lag()));
  }

  std::optional<TrainableStates> states;
  if (config.init != InitStrategy::encoder) {
    states = TrainableStates::zeros(index_set.starts, model.n_x);
  }

  std::vector<ParamBlock> blocks;
  if (model.has_encoder) blocks.push_back({kEncoderParams, model.encoder.flat});
  blocks.push_back({kStateParams, model.state.flat});
  blocks.push_back({kOutputParams, model.output.flat});
  if (model.noise == NoiseStructure::linear_innovation) blocks.push_back({kGainParams, model.gain});
  if (states) blocks.push_back({kInitialStateParams, states->values});

  AdamState adam;
  adam.config = config.adam;
  const BatchSampler sampler(index_set, config.batch_size, Rng::derive(config.seed, 20).next_u64());

  TrainResult result;
  result.model = model;
  result.report.checkpoint = config.checkpoint;
  result.report.stop_reason = "max_epochs";
  if (config.checkpoint) save_model(result.model, *config.checkpoint);

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.time_budget_s && elapsed() >= *config.time_budget_s) {
      result.report.stop_reason = "time_budget";
      break;
    }
    double loss_sum = 0.0;
    for (std::vector<std::size_t>& batch : sampler.epoch(epoch - 1)) {
      std::sort(batch.begin(), batch.end());
      LossGradient lg;
      try {
        lg = batch_loss_gradient(model, normalized, batch, horizon, states ? &*states : nullptr,
                                 config.threads);
        if (!std::isfinite(lg.loss)) throw NumericError("non-finite batch loss");
        adam_step(adam, blocks, lg.gradient);
      } catch (const NumericError& e) {
        const std::string what = "training diverged in epoch " + std::to_string(epoch) + ": " +
                                 e.what();
        if (!config.stop_on_divergence) {
          throw NumericError(what + (config.checkpoint ? "; last good model kept at '" +
                                                             config.checkpoint->string() + "'"
                                                       : std::string()),
                             e.index());
        }
        warn(what + "; keeping the best model so far");
        result.report.stop_reason = "diverged";
        return result;
      }
      loss_sum += lg.loss * static_cast<double>(batch.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(index_set.starts.size());
    try {
      rec.val_metric = config.validation == ValidationMetric::simulation_nrms
                           ? simulation_nrms(model, val)
                           : encoder_loss(model, val_normalized, val_set.starts, config.horizon);
    } catch (const NumericError&) {
      rec.val_metric = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(rec.val_metric)) rec.val_metric = std::numeric_limits<double>::infinity();

    if (rec.val_metric < best) {
      best = rec.val_metric;
      since_best = 0;
      result.model = model;
      result.report.best_epoch = epoch;
      result.report.best_val_metric = best;
      if (config.checkpoint) save_model(result.model, *config.checkpoint);
    } else {
      ++since_best;
    }
    rec.wallclock_s = elapsed();
    result.report.epochs.push_back(rec);
    if (on_epoch && !on_epoch(rec, result.model)) {
      result.report.stop_reason = "callback";
      break;
    }
    if (since_best >= config.patience) {
      result.report.stop_reason = "patience";
      break;
    }
  }
  return result;
}

}  // namespace subnet
