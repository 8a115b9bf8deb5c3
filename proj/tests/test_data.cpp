#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "subnet/data.hpp"
#include "subnet/error.hpp"
#include "subnet/log.hpp"

using namespace subnet;
namespace fs = std::filesystem;

namespace {

fs::path write_text(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / ("subnet_data_" + name);
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

}  // namespace

TEST(Data, EquilibriaOfTheSimulatedSystem) {
  const Eigen::Vector2d x(0.68, 0.68);
  const Eigen::Vector2d next = sim_system_step(x, 0.0, 0.0, SimVariant::base, Eigen::Vector2d::Zero());
  EXPECT_LT((next - x).cwiseAbs().maxCoeff(), 0.01);
  const Eigen::Vector2d neg = sim_system_step(-x, 0.0, 0.0, SimVariant::base, Eigen::Vector2d::Zero());
  EXPECT_LT((neg + x).cwiseAbs().maxCoeff(), 0.01);
}

TEST(Data, ProcessNoiseGain) {
  const Eigen::Vector2d k = process_noise_gain(2.0);
  EXPECT_NEAR(k.norm(), 2.0, 1e-15);
  EXPECT_NEAR(k(1) / k(0), -0.9, 1e-15);
}

TEST(Data, ProcessNoiseVariants) {
  const Eigen::Vector2d x(0.5, -0.2), k(1.0, 2.0);
  const Eigen::Vector2d base = sim_system_step(x, 0.3, 0.1, SimVariant::base, k);
  const Eigen::Vector2d lin = sim_system_step(x, 0.3, 0.1, SimVariant::linear_process_noise, k);
  const Eigen::Vector2d nl = sim_system_step(x, 0.3, 0.1, SimVariant::nonlinear_process_noise, k);
  EXPECT_NEAR(lin(0) - base(0), 0.1, 1e-15);
  EXPECT_NEAR(lin(1) - base(1), 0.2, 1e-15);
  EXPECT_NEAR(nl(0) - base(0), 1.0 * 0.5 * 0.1, 1e-15);
  EXPECT_NEAR(nl(1) - base(1), 2.0 * -0.2 * 0.1, 1e-15);
}

TEST(Data, SimulationSplitsSizesAndNoise) {
  const DataSplits s = simulation_splits(1);
  EXPECT_EQ(s.train.size(), 10000u);
  EXPECT_EQ(s.val.size(), 3000u);
  EXPECT_EQ(s.test.size(), 10000u);
  EXPECT_GE(s.train.u.minCoeff(), -2.0);
  EXPECT_LT(s.train.u.maxCoeff(), 2.0);
  // Test split is noiseless: y_k = x1_k follows the recursion exactly.
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < 100; ++k) {
    EXPECT_EQ(s.test.y(k, 0), x(0));
    x = sim_system_step(x, s.test.u(k, 0), 0.0, SimVariant::base, Eigen::Vector2d::Zero());
  }
  EXPECT_NE(simulation_splits(2).train.u(0, 0), s.train.u(0, 0));
  EXPECT_EQ(simulation_splits(1).val.y, s.val.y);
}

TEST(Data, CsvRoundTripIsExact) {
  IoDataset d;
  d.u = Eigen::MatrixXd::Random(20, 2);
  d.y = Eigen::MatrixXd::Random(20, 1);
  d.u(3, 1) = 1.0 / 3.0;
  const fs::path p = fs::temp_directory_path() / "subnet_rt.csv";
  save_csv(d, p);
  const IoDataset back = load_csv(p, 2, 1);
  EXPECT_EQ(back.u, d.u);
  EXPECT_EQ(back.y, d.y);
  const CsvTable t = load_table(p);
  EXPECT_EQ(t.header, (std::vector<std::string>{"u1", "u2", "y1"}));
  EXPECT_EQ(t.number(3, t.column("u2")), 1.0 / 3.0);
  fs::remove(p);
}

TEST(Data, CsvErrorsNameLineAndColumn) {
  const fs::path p = write_text("bad.csv", "u1,y1\n1,2\n3,abc\n");
  try {
    load_csv(p, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("y1"), std::string::npos);
  }
  const fs::path q = write_text("missing.csv", "u1\n1\n");
  try {
    load_csv(q, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing column 'y1'"), std::string::npos) << e.what();
  }
  try {
    load_csv(fs::temp_directory_path() / "subnet_does_not_exist.csv", 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
}

TEST(Data, SliceSplits) {
  IoDataset d;
  d.u = Eigen::VectorXd::LinSpaced(100, 0, 99);
  d.y = d.u;
  std::string warning;
  auto prev = set_warning_sink([&](const std::string& m) { warning = m; });
  const DataSplits s = slice_splits(d, 50, 20, 25);
  set_warning_sink(prev);
  EXPECT_EQ(s.val.u(0, 0), 50.0);
  EXPECT_EQ(s.test.u(24, 0), 94.0);
  EXPECT_NE(warning.find("5 trailing"), std::string::npos);
  EXPECT_THROW(slice_splits(d, 50, 30, 21), Error);
}

TEST(Data, ValidationRejectsNonFinite) {
  IoDataset d = subnet::testing::make_dataset({1, 2}, {1, NAN});
  EXPECT_THROW(validate(d), Error);
}

TEST(Data, DivergingSystemRaisesNumericError) {
  SimSystemConfig c;
  c.variant = SimVariant::linear_process_noise;
  c.sigma_k = 1e9;
  c.sigma_e = 1.0;
  c.samples = 100;
  EXPECT_THROW(generate_sim_system(c), NumericError);
}
