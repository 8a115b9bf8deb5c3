#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subnet/autodiff.hpp"

namespace subnet {

enum class Activation { tanh, relu, sigmoid };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(const std::string& name);

// Feedforward net with `hidden_layers` layers of `hidden_width` units, linear
// input and output layers, and an optional dense input->output bypass.
struct MlpSpec {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::size_t hidden_layers = 2;
  std::size_t hidden_width = 64;
  Activation activation = Activation::tanh;
  bool bypass = true;

  bool operator==(const MlpSpec&) const = default;
};

void validate(const MlpSpec& spec);

// Sum over layers of (fan_in + 1) * fan_out, plus input * output for the bypass.
std::size_t parameter_count(const MlpSpec& spec);

struct LayerSlot {
  std::size_t weight = 0;  // offset of the row-major (fan_out x fan_in) matrix
  std::size_t bias = 0;    // offset of the fan_out bias vector
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

struct MlpParams {
  std::vector<double> flat;
  std::vector<LayerSlot> layers;    // hidden layers then the output layer
  std::optional<std::size_t> bypass;  // offset of the (output x input) matrix
};

// Offsets only; `flat` is sized but zero.
MlpParams make_params(const MlpSpec& spec);

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
MlpParams init_xavier(const MlpSpec& spec, std::uint64_t seed);

// Batched evaluation without a tape; rows of `input` are samples.
Eigen::MatrixXd mlp_forward(const MlpSpec& spec, const MlpParams& params,
                            const Eigen::MatrixXd& input);
Eigen::VectorXd mlp_forward(const MlpSpec& spec, const MlpParams& params,
                            const Eigen::VectorXd& input);

// Parameter nodes of one net on a tape. Binding once per tape lets every
// rollout step share the same parameter nodes.
struct MlpNodes {
  std::vector<ad::NodeId> weights;
  std::vector<ad::NodeId> biases;
  std::optional<ad::NodeId> bypass;
};

MlpNodes bind(ad::Tape& tape, const MlpSpec& spec, const MlpParams& params, ad::ParamId id);

ad::NodeId mlp_forward(ad::Tape& tape, const MlpSpec& spec, const MlpNodes& nodes,
                       ad::NodeId input);

}  // namespace subnet
