#include "subnet/nets.hpp"

#include <cmath>

#include "subnet/error.hpp"
#include "subnet/rng.hpp"

namespace subnet {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::tanh: z = ad::fast_tanh(z.array()); break;
    case Activation::relu: z = z.array().max(0.0); break;
    case Activation::sigmoid: z = 1.0 / (1.0 + (-z.array()).exp()); break;
  }
}

ad::NodeId apply_activation(ad::Tape& tape, Activation a, ad::NodeId z) {
  switch (a) {
    case Activation::tanh: return tape.tanh(z);
    case Activation::relu: return tape.relu(z);
    case Activation::sigmoid: return tape.sigmoid(z);
  }
  return z;
}

}  // namespace

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  fail(ErrorKind::config, "unknown activation '" + name + "' (expected tanh, relu or sigmoid)");
}

void validate(const MlpSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    fail(ErrorKind::config, "mlp dims must be >= 1");
  }
  if (spec.hidden_layers >= 1 && spec.hidden_width < 1) {
    fail(ErrorKind::config, "mlp hidden width must be >= 1 when hidden layers are present");
  }
}

std::size_t parameter_count(const MlpSpec& spec) {
  std::size_t count = 0;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i < spec.hidden_layers; ++i) {
    count += (fan_in + 1) * spec.hidden_width;
    fan_in = spec.hidden_width;
  }
  count += (fan_in + 1) * spec.output_dim;
  if (spec.bypass) count += spec.input_dim * spec.output_dim;
  return count;
}

MlpParams make_params(const MlpSpec& spec) {
  validate(spec);
  MlpParams p;
  std::size_t offset = 0;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t i = 0; i <= spec.hidden_layers; ++i) {
    const std::size_t fan_out = i == spec.hidden_layers ? spec.output_dim : spec.hidden_width;
    LayerSlot slot{offset, offset + fan_in * fan_out, fan_in, fan_out};
    offset = slot.bias + fan_out;
    p.layers.push_back(slot);
    fan_in = fan_out;
  }
  if (spec.bypass) {
    p.bypass = offset;
    offset += spec.input_dim * spec.output_dim;
  }
  p.flat.assign(offset, 0.0);
  return p;
}

MlpParams init_xavier(const MlpSpec& spec, std::uint64_t seed) {
  MlpParams p = make_params(spec);
  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t k = 0; k < fan_in * fan_out; ++k) {
      p.flat[offset + k] = rng.uniform(-bound, bound);
    }
  };
  for (const LayerSlot& slot : p.layers) fill(slot.weight, slot.fan_in, slot.fan_out);
  if (p.bypass) fill(*p.bypass, spec.input_dim, spec.output_dim);
  return p;
}

Eigen::MatrixXd mlp_forward(const MlpSpec& spec, const MlpParams& params,
                            const Eigen::MatrixXd& input) {
  require(static_cast<std::size_t>(input.cols()) == spec.input_dim,
          "mlp_forward: input has " + std::to_string(input.cols()) + " columns, expected " +
              std::to_string(spec.input_dim));
  require(params.flat.size() == parameter_count(spec), "mlp_forward: parameter size mismatch");
  Eigen::MatrixXd z = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const LayerSlot& s = params.layers[i];
    Eigen::Map<const RowMajor> w(params.flat.data() + s.weight, s.fan_out, s.fan_in);
    Eigen::Map<const Eigen::RowVectorXd> b(params.flat.data() + s.bias, s.fan_out);
    Eigen::MatrixXd next = z * w.transpose();
    next.rowwise() += b;
    if (i + 1 < params.layers.size()) apply_activation(spec.activation, next);
    z = std::move(next);
  }
  if (params.bypass) {
    Eigen::Map<const RowMajor> w(params.flat.data() + *params.bypass, spec.output_dim,
                                 spec.input_dim);
    z.noalias() += input * w.transpose();
  }
  return z;
}

Eigen::VectorXd mlp_forward(const MlpSpec& spec, const MlpParams& params,
                            const Eigen::VectorXd& input) {
  Eigen::MatrixXd row = input.transpose();
  return mlp_forward(spec, params, row).row(0).transpose();
}

MlpNodes bind(ad::Tape& tape, const MlpSpec& spec, const MlpParams& params, ad::ParamId id) {
  require(params.flat.size() == parameter_count(spec), "bind: parameter size mismatch");
  if (!tape.has_parameter(id)) tape.register_parameter(id, params.flat);
  MlpNodes nodes;
  for (const LayerSlot& s : params.layers) {
    nodes.weights.push_back(tape.parameter(id, s.weight, static_cast<ad::Index>(s.fan_out),
                                           static_cast<ad::Index>(s.fan_in)));
    nodes.biases.push_back(tape.parameter(id, s.bias, 1, static_cast<ad::Index>(s.fan_out)));
  }
  if (params.bypass) {
    nodes.bypass = tape.parameter(id, *params.bypass, static_cast<ad::Index>(spec.output_dim),
                                  static_cast<ad::Index>(spec.input_dim));
  }
  return nodes;
}

ad::NodeId mlp_forward(ad::Tape& tape, const MlpSpec& spec, const MlpNodes& nodes,
                       ad::NodeId input) {
  ad::NodeId z = input;
  const std::size_t layers = nodes.weights.size();
  for (std::size_t i = 0; i < layers; ++i) {
    z = tape.affine(z, nodes.weights[i], nodes.biases[i]);
    if (i + 1 < layers) z = apply_activation(tape, spec.activation, z);
  }
  if (nodes.bypass) z = tape.add(z, tape.affine(input, *nodes.bypass));
  return z;
}

}  // namespace subnet
