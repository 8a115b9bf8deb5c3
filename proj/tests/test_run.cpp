#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "subnet/data.hpp"
#include "subnet/error.hpp"
#include "subnet/run.hpp"

using namespace subnet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("subnet_run_" + name);
  fs::remove_all(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::contract;
}

const char* kTinyConfig = R"({
  "seed": 4,
  "model": {"n_x": 2, "n_a": 2, "n_b": 2, "hidden_layers": 1, "hidden_width": 4},
  "train": {"T": 5, "batch_size": 64, "max_epochs": 1},
  "eval": {"k_max": 3}
})";

}  // namespace

TEST(RunConfig, DefaultsFollowTheGuidelines) {
  const RunConfig c = parse_run_config("{}");
  EXPECT_EQ(c.train.horizon, 40u);
  EXPECT_EQ(c.train.batch_size, 256u);
  EXPECT_EQ(c.train.structure.n_x, 4u);
  EXPECT_EQ(c.train.structure.hidden_width, 64u);
  EXPECT_TRUE(c.train.structure.bypass);
  EXPECT_EQ(c.train.adam.learning_rate, 1e-3);
  EXPECT_EQ(c.train.patience, 50u);
  EXPECT_EQ(c.train.validation, ValidationMetric::simulation_nrms);
}

TEST(RunConfig, UnknownKeysNameTheirPath) {
  try {
    parse_run_config(R"({"train": {"T": 4, "learnin_rate": 0.1}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("train.learnin_rate"), std::string::npos) << e.what();
  }
  try {
    parse_run_config(R"({"model": {"n_x": -1}})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("model.n_x"), std::string::npos) << e.what();
  }
  EXPECT_EQ(kind_of([] { parse_run_config("{not json"); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { parse_run_config(R"({"compare": {"variants": ["x"]}})"); }), ErrorKind::config);
}

TEST(RunConfig, NullKeepsDefaults) {
  const RunConfig c = parse_run_config(
      R"({"data": {"record_csv": null}, "train": {"T": null, "time_budget_s": null}})");
  EXPECT_FALSE(c.data.record_csv.has_value());
  EXPECT_EQ(c.train.horizon, 40u);
  EXPECT_FALSE(c.train.time_budget_s.has_value());
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c = parse_run_config(kTinyConfig);
  c.train.time_budget_s = 12.5;
  const RunConfig back = parse_run_config(run_config_to_json(c));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(c));
}

TEST(Commands, GenerateWritesSplitsAndRefusesOverwrite) {
  const fs::path dir = fresh_dir("generate");
  RunOptions o;
  o.out_dir = dir;
  cmd_generate(parse_run_config("{}"), o);
  EXPECT_EQ(load_csv(dir / "train.csv", 1, 1).size(), 10000u);
  EXPECT_EQ(load_csv(dir / "val.csv", 1, 1).size(), 3000u);
  EXPECT_EQ(load_csv(dir / "test.csv", 1, 1).size(), 10000u);
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_EQ(kind_of([&] { cmd_generate(parse_run_config("{}"), o); }), ErrorKind::io);
  const std::string before = read_file(dir / "train.csv");
  o.force = true;
  o.seed = 99;
  cmd_generate(parse_run_config("{}"), o);
  EXPECT_NE(read_file(dir / "train.csv"), before);
  fs::remove_all(dir);
}

TEST(Commands, TrainEvalAndAnalyze) {
  const fs::path dir = fresh_dir("train");
  RunOptions o;
  o.out_dir = dir;
  const RunConfig c = parse_run_config(kTinyConfig);
  cmd_train(c, o);
  EXPECT_TRUE(fs::exists(dir / "model.ckpt"));
  const CsvTable report = load_table(dir / "train_report.csv");
  EXPECT_EQ(report.rows.size(), 1u);
  load_table(dir / "train_timing.csv");
  // The copied config reproduces the run.
  const RunConfig copy = parse_run_config(read_file(dir / "config.json"));
  EXPECT_EQ(run_config_to_json(copy), run_config_to_json(c));

  const std::string summary = cmd_eval(c, o);
  EXPECT_NE(summary.find("NRMS"), std::string::npos);
  const CsvTable kstep = load_table(dir / "kstep.csv");
  EXPECT_EQ(kstep.rows.size(), 4u);
  const CsvTable sim = load_table(dir / "simulation.csv");
  EXPECT_EQ(sim.rows.size(), 10000u);
  const CsvTable metrics = load_table(dir / "metrics.csv");
  EXPECT_TRUE(std::isfinite(metrics.number(0, 1)));

  RunConfig zero = c;
  zero.eval.k_max = 0;
  o.force = true;
  cmd_eval(zero, o);
  EXPECT_EQ(load_table(dir / "kstep.csv").rows.size(), 1u);
  // The option override wins over the config and is recorded in the copy.
  o.k_max = 2;
  cmd_eval(c, o);
  EXPECT_EQ(load_table(dir / "kstep.csv").rows.size(), 3u);
  EXPECT_EQ(parse_run_config(read_file(dir / "eval_config.json")).eval.k_max, 2u);
  o.k_max.reset();

  RunConfig a = c;
  a.analyze.horizons = {2};
  a.analyze.trials = 50;
  a.analyze.g_sweep_max_T = 8;
  cmd_analyze(a, o);
  EXPECT_EQ(load_table(dir / "g_of_d.csv").rows.size(), 8u);
  EXPECT_EQ(load_table(dir / "overlap_variance.csv").rows.size(), 1u);
  fs::remove_all(dir);
}

TEST(Commands, EvalRejectsChannelMismatch) {
  const fs::path dir = fresh_dir("mismatch");
  RunOptions o;
  o.out_dir = dir;
  RunConfig c = parse_run_config(kTinyConfig);
  c.train.max_epochs = 0;
  cmd_train(c, o);
  IoDataset two;
  two.u = Eigen::MatrixXd::Random(50, 2);
  two.y = Eigen::MatrixXd::Random(50, 1);
  save_csv(two, dir / "two.csv");
  c.data.train_csv = c.data.val_csv = c.data.test_csv = dir / "two.csv";
  c.data.n_u = 2;
  o.force = true;
  try {
    cmd_eval(c, o);
    FAIL();
  } catch (const Error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("n_u=1"), std::string::npos) << what;
    EXPECT_NE(what.find("n_u=2"), std::string::npos) << what;
  }
  fs::remove_all(dir);
}

TEST(Commands, CompareWithZeroBudget) {
  const fs::path dir = fresh_dir("compare");
  RunOptions o;
  o.out_dir = dir;
  RunConfig c = parse_run_config(kTinyConfig);
  c.compare.budget_s = 0.0;
  cmd_compare(c, o);
  const CsvTable t = load_table(dir / "compare.csv");
  EXPECT_EQ(t.rows.size(), 5u);
  for (Variant v : kAllVariants) {
    EXPECT_TRUE(load_table(dir / (std::string("curve_") + to_string(v) + ".csv")).rows.empty());
  }
  fs::remove_all(dir);
}
