#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "subnet/subnet.h"

namespace fs = std::filesystem;

TEST(CApi, ExitCodes) {
  EXPECT_EQ(subnet_exit_code(SUBNET_OK), 0);
  EXPECT_EQ(subnet_exit_code(SUBNET_ERR_CONFIG), 2);
  EXPECT_EQ(subnet_exit_code(SUBNET_ERR_NUMERIC), 3);
  EXPECT_EQ(subnet_exit_code(SUBNET_ERR_IO), 4);
  EXPECT_EQ(subnet_exit_code(SUBNET_ERR_CORRUPT), 4);
}

TEST(CApi, ErrorsSetLastError) {
  subnet_dataset* d = nullptr;
  EXPECT_EQ(subnet_dataset_load_csv("/nonexistent/x.csv", 1, 1, &d), SUBNET_ERR_IO);
  EXPECT_EQ(d, nullptr);
  EXPECT_NE(std::string(subnet_last_error()).find("/nonexistent/x.csv"), std::string::npos);
  EXPECT_EQ(subnet_run("train", "{\"bogus\": 1}", nullptr), SUBNET_ERR_CONFIG);
  EXPECT_EQ(subnet_run("frobnicate", "{}", nullptr), SUBNET_ERR_CONFIG);
  EXPECT_EQ(subnet_g_of_d(1, 2, 3, nullptr), SUBNET_ERR_CONTRACT);
}

TEST(CApi, GenerateTrainSimulate) {
  subnet_dataset *train = nullptr, *val = nullptr, *test = nullptr;
  ASSERT_EQ(subnet_dataset_generate_splits("base", 0.0, 3, &train, &val, &test), SUBNET_OK);
  EXPECT_EQ(subnet_dataset_size(train), 10000u);
  EXPECT_EQ(subnet_dataset_n_y(val), 1u);

  const char* cfg = R"({"model": {"n_x": 2, "n_a": 3, "n_b": 3, "hidden_layers": 1,
                        "hidden_width": 4}, "train": {"T": 5, "max_epochs": 1}})";
  subnet_model* model = nullptr;
  subnet_report* report = nullptr;
  ASSERT_EQ(subnet_train(cfg, train, val, &model, &report), SUBNET_OK) << subnet_last_error();
  EXPECT_EQ(subnet_report_epochs(report), 1u);
  EXPECT_EQ(subnet_report_best_epoch(report), 1u);
  double loss = 0, val_metric = 0;
  EXPECT_EQ(subnet_report_epoch(report, 0, &loss, &val_metric, nullptr), SUBNET_OK);
  EXPECT_GT(loss, 0.0);

  double nrms = 0;
  ASSERT_EQ(subnet_model_nrms(model, val, &nrms), SUBNET_OK);
  EXPECT_DOUBLE_EQ(nrms, val_metric);

  std::vector<double> sim(subnet_dataset_size(test));
  size_t skip = 0;
  ASSERT_EQ(subnet_model_simulate(model, test, sim.data(), sim.size(), &skip), SUBNET_OK);
  EXPECT_EQ(skip, 3u);
  EXPECT_TRUE(std::isnan(sim[0]));
  EXPECT_TRUE(std::isfinite(sim[3]));
  EXPECT_EQ(subnet_model_simulate(model, test, sim.data(), 10, &skip), SUBNET_ERR_CONTRACT);

  std::vector<double> profile(4);
  EXPECT_EQ(subnet_model_kstep_nrms(model, test, 3, profile.data()), SUBNET_OK);

  const fs::path p = fs::temp_directory_path() / "subnet_capi.ckpt";
  ASSERT_EQ(subnet_model_save(model, p.c_str()), SUBNET_OK);
  subnet_model* back = nullptr;
  ASSERT_EQ(subnet_model_load(p.c_str(), &back), SUBNET_OK);
  double nrms_back = 0;
  subnet_model_nrms(back, val, &nrms_back);
  EXPECT_EQ(nrms_back, nrms);
  fs::remove(p);

  subnet_model_free(back);
  subnet_model_free(model);
  subnet_report_free(report);
  subnet_dataset_free(train);
  subnet_dataset_free(val);
  subnet_dataset_free(test);
}

TEST(CApi, AnalysisFunctions) {
  double g = 0;
  ASSERT_EQ(subnet_g_of_d(1, 2, 3, &g), SUBNET_OK);
  EXPECT_DOUBLE_EQ(g, 5.0 / 9.0);
  double v1 = 0, vt = 0, ratio = 0;
  ASSERT_EQ(subnet_overlap_variance_mc(4, 64, 200, 1, 1, &v1, &vt, &ratio), SUBNET_OK);
  EXPECT_GT(vt, 0.0);
  EXPECT_LT(ratio, 1.0);
}

TEST(CApi, RunCommandWithOptions) {
  const fs::path dir = fs::temp_directory_path() / "subnet_capi_run";
  fs::remove_all(dir);
  subnet_run_options o;
  subnet_run_options_init(&o);
  const std::string out = dir.string();
  o.out_dir = out.c_str();
  int lines = 0;
  o.log = [](const char*, void* user) { ++*static_cast<int*>(user); };
  o.log_user = &lines;
  ASSERT_EQ(subnet_run("generate", "{}", &o), SUBNET_OK) << subnet_last_error();
  EXPECT_GT(lines, 0);
  EXPECT_NE(std::string(subnet_last_summary()).find("10000"), std::string::npos);
  EXPECT_EQ(subnet_run("generate", "{}", &o), SUBNET_ERR_IO);
  fs::remove_all(dir);
}
