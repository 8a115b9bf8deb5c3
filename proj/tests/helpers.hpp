#pragma once

#include <initializer_list>
#include <vector>

#include <Eigen/Dense>

#include "subnet/data.hpp"
#include "subnet/model.hpp"
#include "subnet/nets.hpp"

namespace subnet::testing {

// Single-layer linear map out = W in + b (no hidden layers, no bypass).
inline MlpParams linear_params(const MlpSpec& spec, std::initializer_list<double> w,
                               std::initializer_list<double> b) {
  MlpParams p = make_params(spec);
  const LayerSlot& slot = p.layers.back();
  std::copy(w.begin(), w.end(), p.flat.begin() + static_cast<std::ptrdiff_t>(slot.weight));
  std::copy(b.begin(), b.end(), p.flat.begin() + static_cast<std::ptrdiff_t>(slot.bias));
  return p;
}

// Scalar model with linear f and h = x; encoder selects y_t.
inline SubnetModel scalar_linear_model(NoiseStructure noise, std::initializer_list<double> f_w,
                                       std::size_t n_a = 0, std::size_t n_b = 0) {
  SubnetModel m;
  m.n_x = 1;
  m.n_u = 1;
  m.n_y = 1;
  m.n_a = n_a;
  m.n_b = n_b;
  m.noise = noise;
  const std::size_t f_in = noise == NoiseStructure::general_innovation ? 3 : 2;
  m.state_spec = MlpSpec{f_in, 1, 0, 1, Activation::tanh, false};
  m.output_spec = MlpSpec{1, 1, 0, 1, Activation::tanh, false};
  m.encoder_spec = MlpSpec{m.encoder_input_dim(), 1, 0, 1, Activation::tanh, false};
  m.state = linear_params(m.state_spec, f_w, {0.0});
  m.output = linear_params(m.output_spec, {1.0}, {0.0});
  m.encoder = make_params(m.encoder_spec);
  m.encoder.flat[m.encoder.layers.back().weight + m.encoder_input_dim() - 1] = 1.0;
  m.gain.assign(noise == NoiseStructure::linear_innovation ? 1 : 0, 0.0);
  m.norm = Normalization::identity(1, 1);
  return m;
}

inline IoDataset make_dataset(std::initializer_list<double> u, std::initializer_list<double> y) {
  IoDataset d;
  d.u = Eigen::Map<const Eigen::VectorXd>(u.begin(), static_cast<Eigen::Index>(u.size()));
  d.y = Eigen::Map<const Eigen::VectorXd>(y.begin(), static_cast<Eigen::Index>(y.size()));
  d.name = "toy";
  return d;
}

inline ModelStructure tiny_structure(NoiseStructure noise = NoiseStructure::output_error) {
  ModelStructure s;
  s.n_x = 2;
  s.n_a = 2;
  s.n_b = 2;
  s.noise = noise;
  s.hidden_layers = 1;
  s.hidden_width = 6;
  return s;
}

// Random record of the simulated system, short enough for unit tests.
inline IoDataset small_record(std::size_t samples, std::uint64_t seed, double sigma_e = 0.05) {
  SimSystemConfig c;
  c.samples = samples;
  c.seed = seed;
  c.sigma_e = sigma_e;
  return generate_sim_system(c);
}

}  // namespace subnet::testing
