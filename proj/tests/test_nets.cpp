#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "subnet/autodiff.hpp"
#include "subnet/error.hpp"
#include "subnet/nets.hpp"

using namespace subnet;

namespace {

// Straight-line reimplementation of the layer recurrence on the flat layout.
Eigen::VectorXd reference_forward(const MlpSpec& s, const std::vector<double>& flat,
                                  const Eigen::VectorXd& in) {
  std::size_t at = 0;
  Eigen::VectorXd z = in;
  std::size_t fan_in = s.input_dim;
  auto layer = [&](std::size_t fan_out, bool activate) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(fan_out));
    for (std::size_t o = 0; o < fan_out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < fan_in; ++i) acc += flat[at + o * fan_in + i] * z(static_cast<Eigen::Index>(i));
      out(static_cast<Eigen::Index>(o)) = acc;
    }
    at += fan_out * fan_in;
    for (std::size_t o = 0; o < fan_out; ++o) {
      double& v = out(static_cast<Eigen::Index>(o));
      v += flat[at + o];
      if (activate) v = std::tanh(v);
    }
    at += fan_out;
    z = out;
    fan_in = fan_out;
  };
  for (std::size_t l = 0; l < s.hidden_layers; ++l) layer(s.hidden_width, true);
  layer(s.output_dim, false);
  if (s.bypass) {
    for (std::size_t o = 0; o < s.output_dim; ++o) {
      for (std::size_t i = 0; i < s.input_dim; ++i) {
        z(static_cast<Eigen::Index>(o)) += flat[at + o * s.input_dim + i] * in(static_cast<Eigen::Index>(i));
      }
    }
  }
  return z;
}

}  // namespace

TEST(Nets, ParameterCountFormula) {
  const MlpSpec s{3, 2, 2, 5, Activation::tanh, true};
  EXPECT_EQ(parameter_count(s), (3 + 1) * 5 + (5 + 1) * 5 + (5 + 1) * 2 + 3 * 2);
  EXPECT_EQ(init_xavier(s, 1).flat.size(), parameter_count(s));
  const MlpSpec linear{4, 1, 0, 1, Activation::tanh, false};
  EXPECT_EQ(parameter_count(linear), 5u);
}

TEST(Nets, XavierBoundsAndZeroBiases) {
  const MlpSpec s{3, 3, 1, 3, Activation::tanh, true};
  const MlpParams p = init_xavier(s, 5);
  for (const LayerSlot& l : p.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
    EXPECT_DOUBLE_EQ(bound, 1.0);
    for (std::size_t i = 0; i < l.fan_in * l.fan_out; ++i) {
      EXPECT_LE(std::abs(p.flat[l.weight + i]), bound);
    }
    for (std::size_t i = 0; i < l.fan_out; ++i) EXPECT_EQ(p.flat[l.bias + i], 0.0);
  }
  ASSERT_TRUE(p.bypass.has_value());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_LE(std::abs(p.flat[*p.bypass + i]), 1.0);
}

TEST(Nets, XavierIsDeterministic) {
  const MlpSpec s{4, 2, 2, 8, Activation::tanh, true};
  EXPECT_EQ(init_xavier(s, 42).flat, init_xavier(s, 42).flat);
  EXPECT_NE(init_xavier(s, 42).flat, init_xavier(s, 43).flat);
}

TEST(Nets, IdentityWithoutHiddenLayers) {
  const MlpSpec s{2, 2, 0, 1, Activation::tanh, false};
  const MlpParams p = subnet::testing::linear_params(s, {1, 0, 0, 1}, {0, 0});
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -4.0);
  EXPECT_EQ(mlp_forward(s, p, x), x);
}

TEST(Nets, ZeroWeightsGiveOutputBias) {
  const MlpSpec s{3, 1, 1, 1, Activation::tanh, false};
  MlpParams p = make_params(s);
  p.flat[p.layers.back().bias] = 0.3;
  EXPECT_DOUBLE_EQ(mlp_forward(s, p, Eigen::VectorXd(Eigen::Vector3d(1, 2, 3)))(0), 0.3);
}

TEST(Nets, MatchesStraightLineReference) {
  const MlpSpec s{2, 1, 2, 2, Activation::tanh, false};
  const MlpParams p = init_xavier(s, 7);
  const Eigen::VectorXd x = Eigen::Vector2d(1.0, -1.0);
  EXPECT_NEAR(mlp_forward(s, p, x)(0), reference_forward(s, p.flat, x)(0), 1e-15);
  const MlpSpec b{3, 2, 2, 4, Activation::tanh, true};
  const MlpParams pb = init_xavier(b, 9);
  const Eigen::VectorXd xb = Eigen::Vector3d(0.2, -0.5, 1.5);
  EXPECT_LT((mlp_forward(b, pb, xb) - reference_forward(b, pb.flat, xb)).norm(), 1e-14);
}

TEST(Nets, TapeForwardMatchesPlainForward) {
  for (Activation a : {Activation::tanh, Activation::relu, Activation::sigmoid}) {
    const MlpSpec s{3, 2, 2, 5, a, true};
    const MlpParams p = init_xavier(s, 3);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
    ad::Tape t;
    const MlpNodes n = bind(t, s, p, 0);
    const auto y = mlp_forward(t, s, n, t.constant(x));
    EXPECT_LT((t.value(y) - mlp_forward(s, p, x)).norm(), 1e-14) << to_string(a);
  }
}

TEST(Nets, DimensionMismatchIsContractError) {
  const MlpSpec s{3, 1, 1, 4, Activation::tanh, true};
  const MlpParams p = init_xavier(s, 1);
  try {
    mlp_forward(s, p, Eigen::VectorXd(Eigen::VectorXd::Zero(2)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contract);
  }
}

TEST(Nets, FiniteDifferenceSlopeIsBounded) {
  const MlpSpec s{2, 1, 2, 16, Activation::tanh, true};
  const MlpParams p = init_xavier(s, 21);
  double max_slope = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Eigen::VectorXd a = Eigen::Vector2d::Random();
    const Eigen::VectorXd b = a + 1e-4 * Eigen::Vector2d::Random();
    max_slope = std::max(max_slope, std::abs(mlp_forward(s, p, a)(0) - mlp_forward(s, p, b)(0)) /
                                        (a - b).norm());
  }
  EXPECT_LT(max_slope, 100.0);
}

TEST(Nets, ActivationNames) {
  EXPECT_EQ(activation_from_string("relu"), Activation::relu);
  EXPECT_THROW(activation_from_string("gelu"), Error);
}
