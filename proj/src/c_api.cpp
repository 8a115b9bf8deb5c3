#include "subnet/subnet.h"

#include <cmath>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include "subnet/analysis.hpp"
#include "subnet/error.hpp"
#include "subnet/model.hpp"
#include "subnet/optim.hpp"
#include "subnet/run.hpp"

struct subnet_dataset {
  subnet::IoDataset data;
};

struct subnet_model {
  subnet::SubnetModel model;
};

struct subnet_report {
  subnet::TrainReport report;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_summary;

subnet_status status_of(subnet::ErrorKind kind) {
  using subnet::ErrorKind;
  switch (kind) {
    case ErrorKind::contract: return SUBNET_ERR_CONTRACT;
    case ErrorKind::config: return SUBNET_ERR_CONFIG;
    case ErrorKind::numeric: return SUBNET_ERR_NUMERIC;
    case ErrorKind::io: return SUBNET_ERR_IO;
    case ErrorKind::parse: return SUBNET_ERR_PARSE;
    case ErrorKind::version: return SUBNET_ERR_VERSION;
    case ErrorKind::corrupt: return SUBNET_ERR_CORRUPT;
    case ErrorKind::degenerate: return SUBNET_ERR_DEGENERATE;
  }
  return SUBNET_ERR_INTERNAL;
}

template <class F>
subnet_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return SUBNET_OK;
  } catch (const subnet::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return SUBNET_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return SUBNET_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown exception";
    return SUBNET_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  subnet::require(p != nullptr, std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* subnet_version(void) { return "1.0.0"; }

const char* subnet_status_name(subnet_status status) {
  switch (status) {
    case SUBNET_OK: return "ok";
    case SUBNET_ERR_CONTRACT: return "contract";
    case SUBNET_ERR_CONFIG: return "config";
    case SUBNET_ERR_NUMERIC: return "numeric";
    case SUBNET_ERR_IO: return "io";
    case SUBNET_ERR_PARSE: return "parse";
    case SUBNET_ERR_VERSION: return "version";
    case SUBNET_ERR_CORRUPT: return "corrupt";
    case SUBNET_ERR_DEGENERATE: return "degenerate";
    case SUBNET_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* subnet_last_error(void) { return last_error.c_str(); }

int subnet_exit_code(subnet_status status) {
  switch (status) {
    case SUBNET_OK: return 0;
    case SUBNET_ERR_CONTRACT:
    case SUBNET_ERR_CONFIG:
    case SUBNET_ERR_DEGENERATE: return 2;
    case SUBNET_ERR_NUMERIC: return 3;
    case SUBNET_ERR_IO:
    case SUBNET_ERR_PARSE:
    case SUBNET_ERR_VERSION:
    case SUBNET_ERR_CORRUPT: return 4;
    case SUBNET_ERR_INTERNAL: return 1;
  }
  return 1;
}

subnet_status subnet_dataset_load_csv(const char* path, size_t n_u, size_t n_y,
                                      subnet_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new subnet_dataset{subnet::load_csv(path, n_u, n_y)};
  });
}

subnet_status subnet_dataset_save_csv(const subnet_dataset* data, const char* path) {
  return guarded([&] {
    need(data, "data");
    need(path, "path");
    subnet::save_csv(data->data, path);
  });
}

subnet_status subnet_dataset_generate(const char* variant, double sigma_k, double sigma_e,
                                      size_t samples, uint64_t seed, subnet_dataset** out) {
  return guarded([&] {
    need(variant, "variant");
    need(out, "out");
    subnet::SimSystemConfig c;
    c.variant = subnet::sim_variant_from_string(variant);
    c.sigma_k = sigma_k;
    c.sigma_e = sigma_e;
    c.samples = samples;
    c.seed = seed;
    *out = new subnet_dataset{subnet::generate_sim_system(c)};
  });
}

subnet_status subnet_dataset_generate_splits(const char* variant, double sigma_k, uint64_t seed,
                                             subnet_dataset** train, subnet_dataset** val,
                                             subnet_dataset** test) {
  return guarded([&] {
    need(variant, "variant");
    need(train, "train");
    need(val, "val");
    need(test, "test");
    subnet::SimSystemConfig c;
    c.variant = subnet::sim_variant_from_string(variant);
    c.sigma_k = sigma_k;
    subnet::DataSplits s = subnet::simulation_splits(seed, c);
    auto tr = std::make_unique<subnet_dataset>(subnet_dataset{std::move(s.train)});
    auto va = std::make_unique<subnet_dataset>(subnet_dataset{std::move(s.val)});
    auto te = std::make_unique<subnet_dataset>(subnet_dataset{std::move(s.test)});
    *train = tr.release();
    *val = va.release();
    *test = te.release();
  });
}

size_t subnet_dataset_size(const subnet_dataset* data) { return data ? data->data.size() : 0; }
size_t subnet_dataset_n_u(const subnet_dataset* data) { return data ? data->data.n_u() : 0; }
size_t subnet_dataset_n_y(const subnet_dataset* data) { return data ? data->data.n_y() : 0; }

subnet_status subnet_dataset_copy_y(const subnet_dataset* data, double* out, size_t len) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    const auto& y = data->data.y;
    subnet::require(len >= static_cast<size_t>(y.size()),
                    "subnet_dataset_copy_y: buffer holds " + std::to_string(len) + " values, " +
                        std::to_string(y.size()) + " needed");
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      for (Eigen::Index c = 0; c < y.cols(); ++c) *out++ = y(r, c);
    }
  });
}

void subnet_dataset_free(subnet_dataset* data) { delete data; }

subnet_status subnet_model_load(const char* path, subnet_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new subnet_model{subnet::load_model(path)};
  });
}

subnet_status subnet_model_save(const subnet_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    subnet::save_model(model->model, path);
  });
}

size_t subnet_model_n_x(const subnet_model* model) { return model ? model->model.n_x : 0; }

subnet_status subnet_model_simulate(const subnet_model* model, const subnet_dataset* data,
                                    double* out, size_t len, size_t* skip) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    const subnet::Simulation sim = subnet::simulate(model->model, data->data);
    subnet::require(len >= static_cast<size_t>(sim.y.size()),
                    "subnet_model_simulate: buffer holds " + std::to_string(len) + " values, " +
                        std::to_string(sim.y.size()) + " needed");
    for (Eigen::Index r = 0; r < sim.y.rows(); ++r) {
      for (Eigen::Index c = 0; c < sim.y.cols(); ++c) *out++ = sim.y(r, c);
    }
    if (skip) *skip = sim.skip;
  });
}

subnet_status subnet_model_nrms(const subnet_model* model, const subnet_dataset* data,
                                double* nrms) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(nrms, "nrms");
    *nrms = subnet::simulation_nrms(model->model, data->data);
  });
}

subnet_status subnet_model_kstep_nrms(const subnet_model* model, const subnet_dataset* data,
                                      size_t k_max, double* out) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    const subnet::KStepProfile p = subnet::kstep_nrms(model->model, data->data, k_max);
    for (double v : p.nrms) *out++ = v;
  });
}

void subnet_model_free(subnet_model* model) { delete model; }

subnet_status subnet_train(const char* config_json, const subnet_dataset* train,
                           const subnet_dataset* val, subnet_model** model,
                           subnet_report** report) {
  return guarded([&] {
    need(config_json, "config_json");
    need(train, "train");
    need(val, "val");
    need(model, "model");
    const subnet::RunConfig c = subnet::parse_run_config(config_json);
    subnet::TrainResult r = subnet::train(c.train, train->data, val->data);
    auto m = std::make_unique<subnet_model>(subnet_model{std::move(r.model)});
    if (report) *report = new subnet_report{std::move(r.report)};
    *model = m.release();
  });
}

size_t subnet_report_epochs(const subnet_report* report) {
  return report ? report->report.epochs.size() : 0;
}

subnet_status subnet_report_epoch(const subnet_report* report, size_t index, double* train_loss,
                                  double* val_metric, double* wallclock_s) {
  return guarded([&] {
    need(report, "report");
    subnet::require(index < report->report.epochs.size(), "subnet_report_epoch: index out of range");
    const subnet::EpochRecord& e = report->report.epochs[index];
    if (train_loss) *train_loss = e.train_loss;
    if (val_metric) *val_metric = e.val_metric;
    if (wallclock_s) *wallclock_s = e.wallclock_s;
  });
}

size_t subnet_report_best_epoch(const subnet_report* report) {
  return report && report->report.best_epoch ? *report->report.best_epoch : 0;
}

subnet_status subnet_report_save_csv(const subnet_report* report, const char* path) {
  return guarded([&] {
    need(report, "report");
    need(path, "path");
    subnet::save_report_csv(report->report, path);
  });
}

void subnet_report_free(subnet_report* report) { delete report; }

subnet_status subnet_g_of_d(size_t d, size_t horizon, size_t m_d, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = subnet::g_of_d(d, horizon, m_d);
  });
}

subnet_status subnet_overlap_variance_mc(size_t horizon, size_t samples, size_t trials,
                                         uint64_t seed, size_t threads, double* var_d1,
                                         double* var_dT, double* analytic_ratio) {
  return guarded([&] {
    const subnet::OverlapVarianceResult r =
        subnet::overlap_variance_mc(horizon, samples, trials, seed, threads == 0 ? 1 : threads);
    if (var_d1) *var_d1 = r.var_d1;
    if (var_dT) *var_dT = r.var_dT;
    if (analytic_ratio) *analytic_ratio = r.analytic_ratio();
  });
}

void subnet_run_options_init(subnet_run_options* options) {
  if (!options) return;
  options->out_dir = "run";
  options->has_seed = 0;
  options->seed = 0;
  options->threads = 0;
  options->force = 0;
  options->has_k_max = 0;
  options->k_max = 0;
  options->log = nullptr;
  options->log_user = nullptr;
}

subnet_status subnet_run(const char* command, const char* config_json,
                         const subnet_run_options* options) {
  return guarded([&] {
    need(command, "command");
    const subnet::RunConfig config = subnet::parse_run_config(config_json ? config_json : "{}");
    subnet::RunOptions o;
    if (options) {
      if (options->out_dir) o.out_dir = options->out_dir;
      if (options->has_seed) o.seed = options->seed;
      if (options->threads) o.threads = options->threads;
      o.force = options->force != 0;
      if (options->has_k_max) o.k_max = options->k_max;
      if (options->log) {
        o.log = [fn = options->log, user = options->log_user](const std::string& line) {
          fn(line.c_str(), user);
        };
      }
    }
    const std::string cmd = command;
    if (cmd == "generate") {
      last_summary = subnet::cmd_generate(config, o);
    } else if (cmd == "train") {
      last_summary = subnet::cmd_train(config, o);
    } else if (cmd == "eval") {
      last_summary = subnet::cmd_eval(config, o);
    } else if (cmd == "compare") {
      last_summary = subnet::cmd_compare(config, o);
    } else if (cmd == "analyze") {
      last_summary = subnet::cmd_analyze(config, o);
    } else {
      subnet::fail(subnet::ErrorKind::config, "unknown command '" + cmd + "'");
    }
  });
}

const char* subnet_last_summary(void) { return last_summary.c_str(); }

}  // extern "C"
