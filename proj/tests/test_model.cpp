#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "subnet/error.hpp"
#include "subnet/model.hpp"
#include "subnet/optim.hpp"

using namespace subnet;
using subnet::testing::make_dataset;
using subnet::testing::scalar_linear_model;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("subnet_test_" + name);
}

WindowBatch single_window(std::initializer_list<double> u, std::initializer_list<double> y) {
  WindowBatch w;
  w.starts = {0};
  auto uit = u.begin();
  for (double yv : y) {
    w.u.push_back(Eigen::MatrixXd::Constant(1, 1, *uit++));
    w.y.push_back(Eigen::MatrixXd::Constant(1, 1, yv));
  }
  return w;
}

SubnetModel random_model(NoiseStructure noise, std::uint64_t seed) {
  ModelStructure s = subnet::testing::tiny_structure(noise);
  SubnetModel m = make_model(s, 1, 1, Normalization::identity(1, 1), seed);
  if (noise == NoiseStructure::linear_innovation) m.gain = {0.3, -0.2};
  return m;
}

}  // namespace

TEST(Model, OutputErrorLinearToy) {
  // f = 0.5 x + u, h = x, x0 = 0, u = [1, 0, 0].
  const SubnetModel m = scalar_linear_model(NoiseStructure::output_error, {0.5, 1.0});
  const Rollout r = rollout(m, Eigen::MatrixXd::Zero(1, 1), single_window({1, 0, 0}, {9, 9, 9}),
                            InnovationMode::teacher_forced);
  const double expected[] = {0.0, 1.0, 0.5};
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.outputs[k](0, 0), expected[k], 1e-12);
}

TEST(Model, GeneralInnovationToy) {
  // f = 0.5 x + u + 0.1 e, h = x, x0 = 0, y = [1, 1, 1], u = 0.
  const SubnetModel m = scalar_linear_model(NoiseStructure::general_innovation, {0.5, 1.0, 0.1});
  const Rollout r = rollout(m, Eigen::MatrixXd::Zero(1, 1), single_window({0, 0, 0}, {1, 1, 1}),
                            InnovationMode::teacher_forced);
  const double expected[] = {0.0, 0.1, 0.14};
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(r.outputs[k](0, 0), expected[k], 1e-12);
}

TEST(Model, HorizonOneSkipsStateTransition) {
  SubnetModel m = scalar_linear_model(NoiseStructure::output_error, {0.5, 1.0}, 1, 1);
  m.state.flat.assign(m.state.flat.size(), std::nan(""));
  const IoDataset d = make_dataset({0.1, 0.2, 0.3}, {0.4, 0.7, -1.0});
  const std::size_t start[] = {1};
  const WindowBatch w = make_windows(m, d, start, 1);
  const Rollout r = rollout(m, w);
  ASSERT_EQ(r.outputs.size(), 1u);
  EXPECT_EQ(r.outputs[0](0, 0), 0.7);

  ad::Tape t;
  const ModelNodes nodes = bind(t, m);
  const auto x0 = encode(t, m, nodes, t.constant(w.encoder_input));
  const RolloutNodes rn = rollout(t, m, nodes, x0, w);
  EXPECT_EQ(t.value(rn.outputs[0])(0, 0), 0.7);
}

TEST(Model, EncoderInputLayout) {
  SubnetModel m = scalar_linear_model(NoiseStructure::output_error, {0.5, 1.0}, 3, 2);
  EXPECT_EQ(m.encoder_input_dim(), 2u + 4u);
  const IoDataset d = make_dataset({0, 1, 2, 3, 4, 5}, {10, 11, 12, 13, 14, 15});
  const Eigen::RowVectorXd row = encoder_input(m, d, 4);
  Eigen::RowVectorXd expected(6);
  expected << 2, 3, 11, 12, 13, 14;
  EXPECT_EQ(row, expected);
}

TEST(Model, DefaultEncoderInputLength) {
  ModelStructure s;
  const SubnetModel m = make_model(s, 1, 1, Normalization::identity(1, 1), 0);
  EXPECT_EQ(m.encoder_input_dim(), 21u);
}

TEST(Model, SelectionEncoderReturnsLastOutput) {
  const SubnetModel m = scalar_linear_model(NoiseStructure::output_error, {0.5, 1.0}, 2, 2);
  Eigen::MatrixXd u(2, 1), y(3, 1);
  u << 0.1, 0.2;
  y << -0.3, 0.4, 0.7;
  EXPECT_EQ(encode(m, u, y)(0), 0.7);
  EXPECT_THROW(encode(m, y, y), Error);
}

TEST(Model, ZeroEncoderGivesZeroState) {
  SubnetModel m = random_model(NoiseStructure::output_error, 3);
  std::fill(m.encoder.flat.begin(), m.encoder.flat.end(), 0.0);
  const Eigen::VectorXd x = encode(m, Eigen::MatrixXd::Random(2, 1), Eigen::MatrixXd::Random(3, 1));
  EXPECT_EQ(x, Eigen::VectorXd::Zero(2));
}

TEST(Model, EncoderIsLocal) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 4);
  IoDataset d = subnet::testing::small_record(50, 1);
  const Eigen::RowVectorXd before = encoder_input(m, d, 20);
  d.u(25, 0) += 1.0;
  d.y(10, 0) -= 1.0;
  d.u(20, 0) += 1.0;  // u_t is outside the window
  EXPECT_EQ(encoder_input(m, d, 20), before);
}

TEST(Model, PrefixProperty) {
  const SubnetModel m = random_model(NoiseStructure::general_innovation, 5);
  const IoDataset d = subnet::testing::small_record(60, 2);
  const std::size_t starts[] = {5, 17, 30};
  const Rollout long_r = rollout(m, make_windows(m, d, starts, 12));
  const Rollout short_r = rollout(m, make_windows(m, d, starts, 5));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(long_r.outputs[k], short_r.outputs[k]);
}

TEST(Model, ReductionsToOutputError) {
  const IoDataset d = subnet::testing::small_record(80, 3);
  const SubnetModel oe = random_model(NoiseStructure::output_error, 6);

  SubnetModel lin = oe;
  lin.noise = NoiseStructure::linear_innovation;
  lin.gain.assign(lin.n_x * lin.n_y, 0.0);

  // General innovation with zero weights on the innovation input.
  SubnetModel gen = oe;
  gen.noise = NoiseStructure::general_innovation;
  gen.state_spec.input_dim = oe.n_x + oe.n_u + oe.n_y;
  gen.state = make_params(gen.state_spec);
  for (std::size_t l = 0; l < gen.state.layers.size(); ++l) {
    const LayerSlot& g = gen.state.layers[l];
    const LayerSlot& o = oe.state.layers[l];
    for (std::size_t r = 0; r < g.fan_out; ++r) {
      for (std::size_t c = 0; c < o.fan_in; ++c) {
        gen.state.flat[g.weight + r * g.fan_in + c] = oe.state.flat[o.weight + r * o.fan_in + c];
      }
      gen.state.flat[g.bias + r] = oe.state.flat[o.bias + r];
    }
  }
  const std::size_t bin = gen.state_spec.input_dim;
  for (std::size_t r = 0; r < gen.state_spec.output_dim; ++r) {
    for (std::size_t c = 0; c < oe.state_spec.input_dim; ++c) {
      gen.state.flat[*gen.state.bypass + r * bin + c] =
          oe.state.flat[*oe.state.bypass + r * oe.state_spec.input_dim + c];
    }
  }

  const Simulation base = simulate(oe, d, InnovationMode::teacher_forced);
  for (const SubnetModel* m : {&lin, &gen}) {
    const Simulation s = simulate(*m, d, InnovationMode::teacher_forced);
    for (Eigen::Index t = static_cast<Eigen::Index>(s.skip); t < s.y.rows(); ++t) {
      EXPECT_EQ(s.y(t, 0), base.y(t, 0)) << to_string(m->noise) << " t=" << t;
    }
  }
}

TEST(Model, OutputErrorTeacherForcedEqualsFreeRun) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 7);
  const IoDataset d = subnet::testing::small_record(70, 4);
  const Simulation a = simulate(m, d, InnovationMode::free_run);
  const Simulation b = simulate(m, d, InnovationMode::teacher_forced);
  EXPECT_TRUE(a.y.bottomRows(70 - 2).isApprox(b.y.bottomRows(70 - 2), 0.0));
}

TEST(Model, FreeRunIgnoresMeasuredOutputsAfterWindow) {
  const SubnetModel m = random_model(NoiseStructure::general_innovation, 8);
  IoDataset d = subnet::testing::small_record(40, 5);
  const Simulation a = simulate(m, d);
  d.y.bottomRows(30).setConstant(123.0);
  const Simulation b = simulate(m, d);
  EXPECT_EQ(a.skip, 2u);
  EXPECT_TRUE(std::isnan(a.y(0, 0)) && std::isnan(a.y(1, 0)));
  EXPECT_EQ(a.y.bottomRows(38), b.y.bottomRows(38));
}

TEST(Model, FreeRunEqualsLongRollout) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 9);
  const IoDataset d = subnet::testing::small_record(50, 6);
  const Simulation s = simulate(m, d);
  const std::size_t start[] = {2};
  const Rollout r = rollout(m, make_windows(m, d, start, 48));
  for (std::size_t k = 0; k < 48; ++k) EXPECT_EQ(s.y(static_cast<Eigen::Index>(2 + k), 0), r.outputs[k](0, 0));
}

TEST(Model, TapeRolloutMatchesValueRollout) {
  for (NoiseStructure n : {NoiseStructure::output_error, NoiseStructure::linear_innovation,
                           NoiseStructure::general_innovation}) {
    const SubnetModel m = random_model(n, 10);
    const IoDataset d = subnet::testing::small_record(60, 7);
    const std::size_t starts[] = {2, 9, 40};
    const WindowBatch w = make_windows(m, d, starts, 8);
    const Rollout r = rollout(m, w);
    ad::Tape t;
    const ModelNodes nodes = bind(t, m);
    const RolloutNodes rn = rollout(t, m, nodes, encode(t, m, nodes, t.constant(w.encoder_input)), w);
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_LT((t.value(rn.outputs[k]) - r.outputs[k]).norm(), 1e-13) << to_string(n);
    }
  }
}

TEST(Model, KStepZeroIsEncoderOutputMap) {
  const SubnetModel m = random_model(NoiseStructure::linear_innovation, 11);
  const IoDataset d = subnet::testing::small_record(30, 8);
  const KStepPredictions p = kstep_predictions(m, d, 0);
  ASSERT_EQ(p.starts.size(), 28u);
  for (std::size_t i = 0; i < p.starts.size(); ++i) {
    const Eigen::VectorXd x = mlp_forward(m.encoder_spec, m.encoder,
                                          Eigen::VectorXd(encoder_input(m, d, p.starts[i]).transpose()));
    EXPECT_NEAR(p.predicted[0](static_cast<Eigen::Index>(i), 0),
                mlp_forward(m.output_spec, m.output, x)(0), 1e-14);
  }
}

TEST(Model, KStepOfOutputErrorIsFreeRunPrefix) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 12);
  const IoDataset d = subnet::testing::small_record(40, 9);
  const KStepPredictions p = kstep_predictions(m, d, 5);
  const std::size_t t = 10;
  const IoDataset tail = slice(d, t - 2, d.size() - (t - 2));
  const Simulation s = simulate(m, tail);
  const std::size_t row = t - p.starts.front();
  for (std::size_t k = 0; k <= 5; ++k) {
    EXPECT_NEAR(p.predicted[k](static_cast<Eigen::Index>(row), 0), s.y(static_cast<Eigen::Index>(2 + k), 0), 1e-13);
  }
}

TEST(Model, NormalizationRoundTrip) {
  Normalization n;
  n.u_mean = Eigen::VectorXd::Constant(1, 0.3);
  n.u_std = Eigen::VectorXd::Constant(1, 2.0);
  n.y_mean = Eigen::Vector2d(-1.0, 4.0);
  n.y_std = Eigen::Vector2d(0.1, 3.0);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(20, 2);
  EXPECT_LT((n.denormalize_y(n.normalize_y(y)) - y).cwiseAbs().maxCoeff(), 1e-14);
  n.y_std(1) = 0.0;
  EXPECT_THROW(n.validate(), Error);
}

TEST(Model, CheckpointRoundTripIsBitExact) {
  SubnetModel m = random_model(NoiseStructure::linear_innovation, 13);
  m.norm.u_mean(0) = 0.123456789;
  m.norm.y_std(0) = 1.0 / 3.0;
  const auto path = temp_path("roundtrip.ckpt");
  save_model(m, path);
  const SubnetModel back = load_model(path);
  EXPECT_EQ(back.encoder.flat, m.encoder.flat);
  EXPECT_EQ(back.state.flat, m.state.flat);
  EXPECT_EQ(back.output.flat, m.output.flat);
  EXPECT_EQ(back.gain, m.gain);
  EXPECT_EQ(back.norm.u_mean, m.norm.u_mean);
  EXPECT_EQ(back.norm.y_std, m.norm.y_std);
  EXPECT_EQ(back.noise, m.noise);
  EXPECT_EQ(back.n_a, m.n_a);
  EXPECT_EQ(back.state_spec, m.state_spec);
  const IoDataset d = subnet::testing::small_record(40, 10);
  const Simulation a = simulate(m, d), b = simulate(back, d);
  EXPECT_EQ(a.y.bottomRows(38), b.y.bottomRows(38));
  std::filesystem::remove(path);
}

TEST(Model, TruncatedCheckpointIsCorrupt) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 14);
  const auto path = temp_path("truncated.ckpt");
  save_model(m, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 20);
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::corrupt);
  }
  std::filesystem::remove(path);
}

TEST(Model, UnknownCheckpointVersion) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 15);
  const auto path = temp_path("version.ckpt");
  save_model(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v = 99;
    f.write(&v, 1);
  }
  try {
    load_model(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::version);
  }
  std::filesystem::remove(path);
}

TEST(Model, DivergenceCarriesStep) {
  SubnetModel m = scalar_linear_model(NoiseStructure::output_error, {1e200, 1.0});
  try {
    rollout(m, Eigen::MatrixXd::Constant(1, 1, 1e200), single_window({0, 0, 0, 0}, {0, 0, 0, 0}),
            InnovationMode::free_run);
    FAIL();
  } catch (const NumericError& e) {
    ASSERT_TRUE(e.index().has_value());
    EXPECT_EQ(*e.index(), 1u);
  }
}

TEST(Model, ShortDatasetIsContractError) {
  const SubnetModel m = random_model(NoiseStructure::output_error, 16);
  const IoDataset d = subnet::testing::small_record(2, 1);
  EXPECT_THROW(simulate(m, d), Error);
}
