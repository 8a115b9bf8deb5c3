#include "subnet/run.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "subnet/analysis.hpp"
#include "subnet/error.hpp"
#include "subnet/log.hpp"
#include "subnet/model.hpp"
#include "subnet/rng.hpp"

namespace subnet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(ErrorKind::config, "config: " + path + ": " + what);
}

std::size_t as_size(const json& j, const std::string& path) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) bad(path, "expected a non-negative integer");
  if (j.is_number_integer() && j.get<std::int64_t>() < 0) bad(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

std::size_t as_positive(const json& j, const std::string& path) {
  const std::size_t v = as_size(j, path);
  if (v == 0) bad(path, "must be >= 1");
  return v;
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(path, "must be finite");
  return v;
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) bad(path, "expected true or false");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

// Visits the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class F>
  void field(const std::string& key, F&& apply) {
    seen_.insert(key);
    auto it = j_.find(key);
    // null keeps the default, which for optional fields means unset.
    if (it != j_.end() && !it->is_null()) apply(*it, child(key));
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) bad(child(item.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum, class Parse>
Enum as_enum(const json& j, const std::string& path, Parse parse) {
  const std::string s = as_string(j, path);
  try {
    return parse(s);
  } catch (const Error& e) {
    bad(path, e.what());
  }
}

void parse_data(const json& j, DataConfig& d) {
  Section s(j, "data");
  s.field("record_csv", [&](const json& v, const std::string& p) { d.record_csv = as_string(v, p); });
  s.field("split", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.size() != 3) bad(p, "expected [train, val, test] lengths");
    d.split.clear();
    for (std::size_t i = 0; i < 3; ++i) d.split.push_back(as_size(v[i], p + "[" + std::to_string(i) + "]"));
  });
  s.field("train_csv", [&](const json& v, const std::string& p) { d.train_csv = as_string(v, p); });
  s.field("val_csv", [&](const json& v, const std::string& p) { d.val_csv = as_string(v, p); });
  s.field("test_csv", [&](const json& v, const std::string& p) { d.test_csv = as_string(v, p); });
  s.field("n_u", [&](const json& v, const std::string& p) { d.n_u = as_positive(v, p); });
  s.field("n_y", [&](const json& v, const std::string& p) { d.n_y = as_positive(v, p); });
  s.field("generator", [&](const json& v, const std::string& p) {
    Section g(v, p);
    SimSystemConfig& c = d.generator;
    g.field("variant", [&](const json& x, const std::string& q) {
      c.variant = as_enum<SimVariant>(x, q, sim_variant_from_string);
    });
    g.field("sigma_k", [&](const json& x, const std::string& q) { c.sigma_k = as_double(x, q); });
    g.field("sigma_e", [&](const json& x, const std::string& q) { c.sigma_e = as_double(x, q); });
    g.field("input_lo", [&](const json& x, const std::string& q) { c.input_lo = as_double(x, q); });
    g.field("input_hi", [&](const json& x, const std::string& q) { c.input_hi = as_double(x, q); });
    g.finish();
    try {
      validate(c);
    } catch (const Error& e) {
      bad(p, e.what());
    }
  });
  s.finish();
  if (d.record_csv && d.split.size() != 3) bad("data.split", "required with data.record_csv");
  const int files = (d.train_csv ? 1 : 0) + (d.val_csv ? 1 : 0) + (d.test_csv ? 1 : 0);
  if (files != 0 && files != 3) bad("data", "train_csv, val_csv and test_csv must be given together");
}

void parse_model(const json& j, ModelStructure& m) {
  Section s(j, "model");
  s.field("n_x", [&](const json& v, const std::string& p) { m.n_x = as_positive(v, p); });
  s.field("n_a", [&](const json& v, const std::string& p) { m.n_a = as_size(v, p); });
  s.field("n_b", [&](const json& v, const std::string& p) { m.n_b = as_size(v, p); });
  s.field("noise", [&](const json& v, const std::string& p) {
    m.noise = as_enum<NoiseStructure>(v, p, noise_structure_from_string);
  });
  s.field("hidden_layers", [&](const json& v, const std::string& p) { m.hidden_layers = as_size(v, p); });
  s.field("hidden_width", [&](const json& v, const std::string& p) { m.hidden_width = as_positive(v, p); });
  s.field("activation", [&](const json& v, const std::string& p) {
    m.activation = as_enum<Activation>(v, p, activation_from_string);
  });
  s.field("bypass", [&](const json& v, const std::string& p) { m.bypass = as_bool(v, p); });
  s.finish();
}

void parse_train(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.field("T", [&](const json& v, const std::string& p) { t.horizon = as_positive(v, p); });
  s.field("batch_size", [&](const json& v, const std::string& p) { t.batch_size = as_positive(v, p); });
  s.field("spacing", [&](const json& v, const std::string& p) { t.spacing = as_positive(v, p); });
  s.field("learning_rate", [&](const json& v, const std::string& p) {
    t.adam.learning_rate = as_double(v, p);
    if (!(t.adam.learning_rate > 0.0)) bad(p, "must be > 0");
  });
  s.field("beta1", [&](const json& v, const std::string& p) { t.adam.beta1 = as_double(v, p); });
  s.field("beta2", [&](const json& v, const std::string& p) { t.adam.beta2 = as_double(v, p); });
  s.field("epsilon", [&](const json& v, const std::string& p) { t.adam.epsilon = as_double(v, p); });
  s.field("max_epochs", [&](const json& v, const std::string& p) { t.max_epochs = as_size(v, p); });
  s.field("patience", [&](const json& v, const std::string& p) { t.patience = as_positive(v, p); });
  s.field("validation", [&](const json& v, const std::string& p) {
    t.validation = as_enum<ValidationMetric>(v, p, validation_metric_from_string);
  });
  s.field("time_budget_s", [&](const json& v, const std::string& p) {
    if (v.is_null()) {
      t.time_budget_s.reset();
      return;
    }
    t.time_budget_s = as_double(v, p);
    if (*t.time_budget_s < 0.0) bad(p, "must be >= 0");
  });
  s.finish();
}

void parse_eval(const json& j, EvalConfig& e) {
  Section s(j, "eval");
  s.field("checkpoint", [&](const json& v, const std::string& p) { e.checkpoint = as_string(v, p); });
  s.field("split", [&](const json& v, const std::string& p) {
    e.split = as_string(v, p);
    if (e.split != "train" && e.split != "val" && e.split != "test") {
      bad(p, "expected train, val or test");
    }
  });
  s.field("k_max", [&](const json& v, const std::string& p) { e.k_max = as_size(v, p); });
  s.finish();
}

void parse_compare(const json& j, CompareConfig& c) {
  Section s(j, "compare");
  s.field("variants", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.empty()) bad(p, "expected a non-empty list of variant names");
    c.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      c.variants.push_back(
          as_enum<Variant>(v[i], p + "[" + std::to_string(i) + "]", variant_from_string));
    }
  });
  s.field("budget_s", [&](const json& v, const std::string& p) {
    c.budget_s = as_double(v, p);
    if (*c.budget_s < 0.0) bad(p, "must be >= 0");
  });
  s.finish();
}

void parse_analyze(const json& j, AnalyzeConfig& a) {
  Section s(j, "analyze");
  s.field("horizons", [&](const json& v, const std::string& p) {
    if (!v.is_array() || v.empty()) bad(p, "expected a non-empty list of integers");
    a.horizons.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      a.horizons.push_back(as_positive(v[i], p + "[" + std::to_string(i) + "]"));
    }
  });
  s.field("samples_per_T", [&](const json& v, const std::string& p) { a.samples_per_T = as_positive(v, p); });
  s.field("trials", [&](const json& v, const std::string& p) {
    a.trials = as_size(v, p);
    if (a.trials < 2) bad(p, "must be >= 2");
  });
  s.field("g_sweep_max_T", [&](const json& v, const std::string& p) { a.g_sweep_max_T = as_positive(v, p); });
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::config, std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig c;
  Section s(root, "");
  s.field("seed", [&](const json& v, const std::string& p) {
    if (!v.is_number_unsigned()) bad(p, "expected a non-negative integer");
    c.seed = v.get<std::uint64_t>();
  });
  s.field("threads", [&](const json& v, const std::string& p) { c.threads = as_positive(v, p); });
  s.field("data", [&](const json& v, const std::string&) { parse_data(v, c.data); });
  s.field("model", [&](const json& v, const std::string&) { parse_model(v, c.train.structure); });
  s.field("train", [&](const json& v, const std::string&) { parse_train(v, c.train); });
  s.field("eval", [&](const json& v, const std::string&) { parse_eval(v, c.eval); });
  s.field("compare", [&](const json& v, const std::string&) { parse_compare(v, c.compare); });
  s.field("analyze", [&](const json& v, const std::string&) { parse_analyze(v, c.analyze); });
  s.finish();
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  try {
    validate(c.train);
  } catch (const Error& e) {
    bad("train", e.what());
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  json& d = j["data"];
  if (c.data.record_csv) {
    d["record_csv"] = c.data.record_csv->string();
    d["split"] = c.data.split;
  }
  if (c.data.train_csv) {
    d["train_csv"] = c.data.train_csv->string();
    d["val_csv"] = c.data.val_csv->string();
    d["test_csv"] = c.data.test_csv->string();
  }
  d["n_u"] = c.data.n_u;
  d["n_y"] = c.data.n_y;
  d["generator"] = {{"variant", to_string(c.data.generator.variant)},
                    {"sigma_k", c.data.generator.sigma_k},
                    {"sigma_e", c.data.generator.sigma_e},
                    {"input_lo", c.data.generator.input_lo},
                    {"input_hi", c.data.generator.input_hi}};
  const ModelStructure& m = c.train.structure;
  j["model"] = {{"n_x", m.n_x},
                {"n_a", m.n_a},
                {"n_b", m.n_b},
                {"noise", to_string(m.noise)},
                {"hidden_layers", m.hidden_layers},
                {"hidden_width", m.hidden_width},
                {"activation", to_string(m.activation)},
                {"bypass", m.bypass}};
  const TrainConfig& t = c.train;
  j["train"] = {{"T", t.horizon},
                {"batch_size", t.batch_size},
                {"spacing", t.spacing},
                {"learning_rate", t.adam.learning_rate},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"epsilon", t.adam.epsilon},
                {"max_epochs", t.max_epochs},
                {"patience", t.patience},
                {"validation", to_string(t.validation)},
                {"time_budget_s", t.time_budget_s ? json(*t.time_budget_s) : json(nullptr)}};
  json& e = j["eval"];
  if (c.eval.checkpoint) e["checkpoint"] = c.eval.checkpoint->string();
  e["split"] = c.eval.split;
  e["k_max"] = c.eval.k_max;
  json variants = json::array();
  for (Variant v : c.compare.variants) variants.push_back(to_string(v));
  j["compare"] = {{"variants", variants}};
  if (c.compare.budget_s) j["compare"]["budget_s"] = *c.compare.budget_s;
  j["analyze"] = {{"horizons", c.analyze.horizons},
                  {"samples_per_T", c.analyze.samples_per_T},
                  {"trials", c.analyze.trials},
                  {"g_sweep_max_T", c.analyze.g_sweep_max_T}};
  return j.dump(2) + "\n";
}

DataSplits load_splits(const RunConfig& c) {
  const DataConfig& d = c.data;
  if (d.record_csv) {
    const IoDataset record = load_csv(*d.record_csv, d.n_u, d.n_y);
    return slice_splits(record, d.split[0], d.split[1], d.split[2]);
  }
  if (d.train_csv) {
    DataSplits s;
    s.train = load_csv(*d.train_csv, d.n_u, d.n_y);
    s.val = load_csv(*d.val_csv, d.n_u, d.n_y);
    s.test = load_csv(*d.test_csv, d.n_u, d.n_y);
    s.train.name = "train";
    s.val.name = "val";
    s.test.name = "test";
    return s;
  }
  return simulation_splits(c.seed, d.generator);
}

namespace {

// Output directory with overwrite protection and a run log.
class RunDir {
 public:
  RunDir(const RunConfig& config, const RunOptions& options, std::vector<std::string> outputs,
         const std::string& config_name = "config.json")
      : options_(options) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) {
      fail(ErrorKind::io, "cannot create output directory '" + options.out_dir.string() +
                              "': " + ec.message());
    }
    outputs.push_back(config_name);
    if (!options.force) {
      for (const auto& name : outputs) {
        const fs::path p = options.out_dir / name;
        if (fs::exists(p)) {
          fail(ErrorKind::io, "refusing to overwrite '" + p.string() + "' (use --force)");
        }
      }
    }
    std::ofstream cfg(path(config_name), std::ios::binary);
    cfg << run_config_to_json(config);
    if (!cfg) fail(ErrorKind::io, "cannot write '" + path(config_name).string() + "'");
    log_.open(path("run.log"), std::ios::binary | std::ios::app);
    if (!log_) fail(ErrorKind::io, "cannot open '" + path("run.log").string() + "'");
    previous_sink_ = set_warning_sink([this](const std::string& m) { log("warning: " + m); });
  }

  ~RunDir() { set_warning_sink(std::move(previous_sink_)); }

  fs::path path(const std::string& name) const { return options_.out_dir / name; }

  void log(const std::string& line) {
    log_ << line << '\n';
    log_.flush();
    if (options_.log) options_.log(line);
  }

 private:
  const RunOptions& options_;
  std::ofstream log_;
  LogSink previous_sink_;
};

RunConfig effective(RunConfig c, const RunOptions& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.threads) {
    if (*o.threads < 1) fail(ErrorKind::config, "--threads must be >= 1");
    c.threads = *o.threads;
  }
  if (o.k_max) c.eval.k_max = *o.k_max;
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  return c;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double empirical_snr_db(const IoDataset& noisy, double sigma_e) {
  const double mean = noisy.y.col(0).mean();
  const double var_y = (noisy.y.col(0).array() - mean).square().mean();
  const double var_signal = var_y - sigma_e * sigma_e;
  return 10.0 * std::log10(var_signal / (sigma_e * sigma_e));
}

}  // namespace

std::string cmd_generate(const RunConfig& config_in, const RunOptions& options) {
  const RunConfig config = effective(config_in, options);
  RunDir dir(config, options, {"train.csv", "val.csv", "test.csv"});
  const DataSplits s = simulation_splits(config.seed, config.data.generator);
  save_csv(s.train, dir.path("train.csv"));
  save_csv(s.val, dir.path("val.csv"));
  save_csv(s.test, dir.path("test.csv"));
  std::string summary = "wrote train.csv (" + std::to_string(s.train.size()) + "), val.csv (" +
                        std::to_string(s.val.size()) + "), test.csv (" +
                        std::to_string(s.test.size()) + ") to " + options.out_dir.string();
  if (config.data.generator.sigma_e > 0.0) {
    summary += "; train SNR " +
               fmt("%.2f", empirical_snr_db(s.train, config.data.generator.sigma_e)) + " dB";
  }
  dir.log(summary);
  return summary;
}

std::string cmd_train(const RunConfig& config_in, const RunOptions& options) {
  const RunConfig config = effective(config_in, options);
  RunDir dir(config, options, {"model.ckpt", "train_report.csv", "train_timing.csv"});
  const DataSplits s = load_splits(config);
  TrainConfig tc = config.train;
  tc.checkpoint = dir.path("model.ckpt");
  dir.log("training on " + std::to_string(s.train.size()) + " samples, validating on " +
          std::to_string(s.val.size()));
  const TrainResult r = train(tc, s.train, s.val, [&](const EpochRecord& e, const SubnetModel&) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu  train_loss %.6g  val %.6g  t %.1fs", e.epoch,
                  e.train_loss, e.val_metric, e.wallclock_s);
    dir.log(buf);
    return true;
  });
  save_report_csv(r.report, dir.path("train_report.csv"));
  save_timing_csv(r.report, dir.path("train_timing.csv"));
  std::string summary;
  if (r.report.best_epoch) {
    summary = "best epoch " + std::to_string(*r.report.best_epoch) + " of " +
              std::to_string(r.report.epochs.size()) + ", validation " +
              to_string(tc.validation) + " " + fmt("%.6g", r.report.best_val_metric) +
              " (stopped: " + r.report.stop_reason + ")";
  } else {
    summary = "no epochs run (stopped: " + r.report.stop_reason + "); initial model saved";
  }
  dir.log(summary);
  return summary;
}

std::string cmd_eval(const RunConfig& config_in, const RunOptions& options) {
  const RunConfig config = effective(config_in, options);
  const fs::path ckpt = config.eval.checkpoint ? *config.eval.checkpoint
                                               : options.out_dir / "model.ckpt";
  RunDir dir(config, options, {"metrics.csv", "simulation.csv", "kstep.csv"}, "eval_config.json");
  const SubnetModel model = load_model(ckpt);
  const DataSplits s = load_splits(config);
  const IoDataset& data = config.eval.split == "train" ? s.train
                          : config.eval.split == "val" ? s.val
                                                       : s.test;
  if (data.n_u() != model.n_u || data.n_y() != model.n_y) {
    fail(ErrorKind::contract, "checkpoint '" + ckpt.string() + "' expects n_u=" +
                                  std::to_string(model.n_u) + ", n_y=" + std::to_string(model.n_y) +
                                  " but the " + config.eval.split + " data has n_u=" +
                                  std::to_string(data.n_u()) + ", n_y=" +
                                  std::to_string(data.n_y()));
  }
  const Simulation sim = simulate(model, data, InnovationMode::free_run);
  const double value = nrms(data.y, sim.y, sim.skip);
  {
    std::ofstream out(dir.path("simulation.csv"), std::ios::binary);
    out << "t";
    for (std::size_t c = 0; c < model.n_y; ++c) out << ",y" << c + 1;
    for (std::size_t c = 0; c < model.n_y; ++c) out << ",y_hat" << c + 1;
    out << '\n';
    char buf[32];
    for (Eigen::Index t = 0; t < data.y.rows(); ++t) {
      out << t;
      for (Eigen::Index c = 0; c < data.y.cols(); ++c) {
        std::snprintf(buf, sizeof buf, ",%.17g", data.y(t, c));
        out << buf;
      }
      for (Eigen::Index c = 0; c < sim.y.cols(); ++c) {
        std::snprintf(buf, sizeof buf, ",%.17g", sim.y(t, c));
        out << buf;
      }
      out << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failed for '" + dir.path("simulation.csv").string() + "'");
  }
  std::string summary = config.eval.split + " NRMS " + fmt("%.4f", 100.0 * value) + "%";
  std::optional<KStepProfile> profile;
  if (model.has_encoder) {
    profile = kstep_nrms(model, data, config.eval.k_max, config.train.horizon);
    save_kstep_profile_csv(*profile, dir.path("kstep.csv"));
  } else {
    dir.log("model has no encoder; k-step profile skipped");
  }
  std::ofstream out(dir.path("metrics.csv"), std::ios::binary);
  out << "metric,value\n";
  out << "nrms," << fmt("%.17g", value) << '\n';
  out << "skip," << sim.skip << '\n';
  if (profile) {
    out << "kstep_k0," << fmt("%.17g", profile->nrms.front()) << '\n';
    out << "kstep_kmax," << fmt("%.17g", profile->nrms.back()) << '\n';
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + dir.path("metrics.csv").string() + "'");
  dir.log(summary);
  return summary;
}

std::string cmd_compare(const RunConfig& config_in, const RunOptions& options) {
  const RunConfig config = effective(config_in, options);
  std::vector<std::string> outputs{"compare.csv"};
  for (Variant v : config.compare.variants) {
    outputs.push_back(std::string("curve_") + to_string(v) + ".csv");
    outputs.push_back(std::string("model_") + to_string(v) + ".ckpt");
  }
  RunDir dir(config, options, outputs);
  const DataSplits s = load_splits(config);
  TrainConfig base = config.train;
  if (config.compare.budget_s) base.time_budget_s = config.compare.budget_s;
  std::vector<VariantResult> results;
  for (Variant v : config.compare.variants) {
    TrainConfig tc = base;
    tc.checkpoint = dir.path(std::string("model_") + to_string(v) + ".ckpt");
    dir.log(std::string("running ") + to_string(v));
    results.push_back(run_variant(v, tc, s, [&](const EpochRecord& e, const SubnetModel&) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %s epoch %zu  train_loss %.6g  val %.6g  t %.1fs",
                    to_string(v), e.epoch, e.train_loss, e.val_metric, e.wallclock_s);
      dir.log(buf);
      return true;
    }));
    save_curve_csv(results.back(), dir.path(std::string("curve_") + to_string(v) + ".csv"));
    dir.log(std::string(table_label(v)) + ": test NRMS " +
            fmt("%.3f", 100.0 * results.back().test_nrms) + "%");
  }
  save_compare_csv(results, dir.path("compare.csv"));
  std::string summary;
  for (const auto& r : results) {
    summary += std::string(table_label(r.variant)) + ": " + fmt("%.3f", 100.0 * r.test_nrms) + "%\n";
  }
  return summary;
}

std::string cmd_analyze(const RunConfig& config_in, const RunOptions& options) {
  const RunConfig config = effective(config_in, options);
  RunDir dir(config, options, {"g_of_d.csv", "overlap_variance.csv"});
  {
    std::ofstream out(dir.path("g_of_d.csv"), std::ios::binary);
    out << "T,N,m_1,m_T,G_1,G_T\n";
    for (std::size_t t = 1; t <= config.analyze.g_sweep_max_T; ++t) {
      const std::size_t n = 10 * t;
      const std::size_t m1 = section_count(n, t, 1);
      const std::size_t mt = section_count(n, t, t);
      out << t << ',' << n << ',' << m1 << ',' << mt << ',' << fmt("%.17g", g_of_d(1, t, m1))
          << ',' << fmt("%.17g", g_of_d(t, t, mt)) << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failed for '" + dir.path("g_of_d.csv").string() + "'");
  }
  std::vector<OverlapVarianceResult> rows;
  std::string summary;
  for (std::size_t i = 0; i < config.analyze.horizons.size(); ++i) {
    const std::size_t t = config.analyze.horizons[i];
    const OverlapVarianceResult r = overlap_variance_mc(
        t, t * config.analyze.samples_per_T, config.analyze.trials,
        Rng::derive(config.seed, 300 + i).next_u64(), config.threads);
    rows.push_back(r);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "T=%zu N=%zu: var(V^1)=%.4g var(V^T)=%.4g ratio %.4f (analytic %.4f)\n", t,
                  r.samples, r.var_d1, r.var_dT, r.empirical_ratio(), r.analytic_ratio());
    summary += buf;
  }
  save_overlap_csv(rows, dir.path("overlap_variance.csv"));
  dir.log(summary);
  return summary;
}

}  // namespace subnet
