#include "subnet/model.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "subnet/error.hpp"
#include "subnet/rng.hpp"

namespace subnet {

using Eigen::Index;
using Eigen::MatrixXd;

const char* to_string(NoiseStructure n) noexcept {
  switch (n) {
    case NoiseStructure::output_error: return "output-error";
    case NoiseStructure::linear_innovation: return "linear-innovation";
    case NoiseStructure::general_innovation: return "general-innovation";
  }
  return "unknown";
}

NoiseStructure noise_structure_from_string(const std::string& name) {
  if (name == "output-error" || name == "oe") return NoiseStructure::output_error;
  if (name == "linear-innovation") return NoiseStructure::linear_innovation;
  if (name == "general-innovation") return NoiseStructure::general_innovation;
  fail(ErrorKind::config, "unknown noise structure '" + name +
                              "' (expected output-error, linear-innovation or general-innovation)");
}

// ---------------------------------------------------------------------------
// Normalization

Normalization Normalization::identity(std::size_t n_u, std::size_t n_y) {
  Normalization n;
  n.u_mean = Eigen::VectorXd::Zero(static_cast<Index>(n_u));
  n.u_std = Eigen::VectorXd::Ones(static_cast<Index>(n_u));
  n.y_mean = Eigen::VectorXd::Zero(static_cast<Index>(n_y));
  n.y_std = Eigen::VectorXd::Ones(static_cast<Index>(n_y));
  return n;
}

void Normalization::validate() const {
  require(u_mean.size() == u_std.size() && y_mean.size() == y_std.size(),
          "normalization: mean/std length mismatch");
  if (!(u_std.array() > 0.0).all() || !(y_std.array() > 0.0).all()) {
    fail(ErrorKind::degenerate, "normalization: all standard deviations must be > 0");
  }
}

MatrixXd Normalization::normalize_u(const MatrixXd& u) const {
  require(u.cols() == u_mean.size(), "normalize: u channel count mismatch");
  return (u.rowwise() - u_mean.transpose()).array().rowwise() / u_std.transpose().array();
}

MatrixXd Normalization::normalize_y(const MatrixXd& y) const {
  require(y.cols() == y_mean.size(), "normalize: y channel count mismatch");
  return (y.rowwise() - y_mean.transpose()).array().rowwise() / y_std.transpose().array();
}

MatrixXd Normalization::denormalize_y(const MatrixXd& y) const {
  require(y.cols() == y_mean.size(), "denormalize: y channel count mismatch");
  MatrixXd out = y.array().rowwise() * y_std.transpose().array();
  out.rowwise() += y_mean.transpose();
  return out;
}

IoDataset Normalization::normalize(const IoDataset& data) const {
  IoDataset out;
  out.u = normalize_u(data.u);
  out.y = normalize_y(data.y);
  out.name = data.name;
  return out;
}

// ---------------------------------------------------------------------------
// Construction

void SubnetModel::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::contract, "model: " + what);
  };
  check(n_x >= 1 && n_u >= 1 && n_y >= 1, "n_x, n_u, n_y must be >= 1");
  check(encoder_spec.input_dim == encoder_input_dim(), "encoder input dim must be n_b*n_u + (n_a+1)*n_y");
  check(encoder_spec.output_dim == n_x, "encoder output dim must be n_x");
  const std::size_t f_in = n_x + n_u + (noise == NoiseStructure::general_innovation ? n_y : 0);
  check(state_spec.input_dim == f_in, "state net input dim mismatch");
  check(state_spec.output_dim == n_x, "state net output dim must be n_x");
  check(output_spec.input_dim == n_x && output_spec.output_dim == n_y, "output net must map n_x -> n_y");
  check(encoder.flat.size() == parameter_count(encoder_spec), "encoder parameter size");
  check(state.flat.size() == parameter_count(state_spec), "state parameter size");
  check(output.flat.size() == parameter_count(output_spec), "output parameter size");
  check((noise == NoiseStructure::linear_innovation) == !gain.empty(),
        "gain K present iff noise structure is linear-innovation");
  if (!gain.empty()) check(gain.size() == n_x * n_y, "gain K must be n_x x n_y");
  check(static_cast<std::size_t>(norm.u_mean.size()) == n_u &&
            static_cast<std::size_t>(norm.y_mean.size()) == n_y,
        "normalization channel counts");
  norm.validate();
}

SubnetModel make_model(const ModelStructure& s, std::size_t n_u, std::size_t n_y,
                       Normalization norm, std::uint64_t seed) {
  if (s.n_x < 1) fail(ErrorKind::config, "n_x must be >= 1");
  if (n_u < 1 || n_y < 1) fail(ErrorKind::config, "n_u and n_y must be >= 1");
  SubnetModel m;
  m.n_x = s.n_x;
  m.n_u = n_u;
  m.n_y = n_y;
  m.n_a = s.n_a;
  m.n_b = s.n_b;
  m.noise = s.noise;
  auto spec = [&](std::size_t in, std::size_t out) {
    MlpSpec net;
    net.input_dim = in;
    net.output_dim = out;
    net.hidden_layers = s.hidden_layers;
    net.hidden_width = s.hidden_width;
    net.activation = s.activation;
    net.bypass = s.bypass;
    return net;
  };
  m.encoder_spec = spec(m.encoder_input_dim(), s.n_x);
  const std::size_t f_in =
      s.n_x + n_u + (s.noise == NoiseStructure::general_innovation ? n_y : 0);
  m.state_spec = spec(f_in, s.n_x);
  m.output_spec = spec(s.n_x, n_y);
  m.encoder = init_xavier(m.encoder_spec, Rng::derive(seed, 10).next_u64());
  m.state = init_xavier(m.state_spec, Rng::derive(seed, 11).next_u64());
  m.output = init_xavier(m.output_spec, Rng::derive(seed, 12).next_u64());
  if (s.noise == NoiseStructure::linear_innovation) m.gain.assign(s.n_x * n_y, 0.0);
  m.norm = std::move(norm);
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Encoder and windows

Eigen::RowVectorXd encoder_input(const SubnetModel& model, const IoDataset& normalized,
                                 std::size_t t) {
  require(t >= model.lag() && t < normalized.size(),
          "encoder_input: start " + std::to_string(t) + " outside [" +
              std::to_string(model.lag()) + ", " + std::to_string(normalized.size()) + ")");
  Eigen::RowVectorXd row(static_cast<Index>(model.encoder_input_dim()));
  Index at = 0;
  for (std::size_t j = 0; j < model.n_b; ++j) {
    const auto r = static_cast<Index>(t - model.n_b + j);
    row.segment(at, normalized.u.cols()) = normalized.u.row(r);
    at += normalized.u.cols();
  }
  for (std::size_t j = 0; j <= model.n_a; ++j) {
    const auto r = static_cast<Index>(t - model.n_a + j);
    row.segment(at, normalized.y.cols()) = normalized.y.row(r);
    at += normalized.y.cols();
  }
  return row;
}

Eigen::VectorXd encode(const SubnetModel& model, const MatrixXd& u_window,
                       const MatrixXd& y_window) {
  require(static_cast<std::size_t>(u_window.rows()) == model.n_b &&
              static_cast<std::size_t>(u_window.cols()) == model.n_u,
          "encode: u window must be n_b x n_u");
  require(static_cast<std::size_t>(y_window.rows()) == model.n_a + 1 &&
              static_cast<std::size_t>(y_window.cols()) == model.n_y,
          "encode: y window must be (n_a + 1) x n_y");
  Eigen::RowVectorXd row(static_cast<Index>(model.encoder_input_dim()));
  Index at = 0;
  for (Index r = 0; r < u_window.rows(); ++r, at += u_window.cols()) {
    row.segment(at, u_window.cols()) = u_window.row(r);
  }
  for (Index r = 0; r < y_window.rows(); ++r, at += y_window.cols()) {
    row.segment(at, y_window.cols()) = y_window.row(r);
  }
  return mlp_forward(model.encoder_spec, model.encoder, MatrixXd(row)).row(0).transpose();
}

namespace {

std::size_t first_bad_row(const MatrixXd& a, const MatrixXd& b) {
  for (Index r = 0; r < a.rows(); ++r) {
    if (!a.row(r).allFinite() || !b.row(r).allFinite()) return static_cast<std::size_t>(r);
  }
  return 0;
}

void cut_steps(const IoDataset& normalized, std::span<const std::size_t> starts,
               std::size_t horizon, WindowBatch& out) {
  const auto batch = static_cast<Index>(starts.size());
  out.u.assign(horizon, MatrixXd(batch, normalized.u.cols()));
  out.y.assign(horizon, MatrixXd(batch, normalized.y.cols()));
  for (Index b = 0; b < batch; ++b) {
    const std::size_t t = starts[static_cast<std::size_t>(b)];
    for (std::size_t k = 0; k < horizon; ++k) {
      out.u[k].row(b) = normalized.u.row(static_cast<Index>(t + k));
      out.y[k].row(b) = normalized.y.row(static_cast<Index>(t + k));
    }
  }
}

}  // namespace

WindowBatch make_windows(const SubnetModel& model, const IoDataset& normalized,
                         std::span<const std::size_t> starts, std::size_t horizon) {
  require(horizon >= 1, "make_windows: horizon must be >= 1");
  WindowBatch w;
  w.starts.assign(starts.begin(), starts.end());
  // Models without an encoder get an empty encoder input and may start at 0.
  const Index enc_dim = model.has_encoder ? static_cast<Index>(model.encoder_input_dim()) : 0;
  w.encoder_input.resize(static_cast<Index>(starts.size()), enc_dim);
  for (std::size_t b = 0; b < starts.size(); ++b) {
    require(starts[b] + horizon <= normalized.size(),
            "make_windows: window at " + std::to_string(starts[b]) + " exceeds record length");
    if (model.has_encoder) {
      w.encoder_input.row(static_cast<Index>(b)) = encoder_input(model, normalized, starts[b]);
    }
  }
  cut_steps(normalized, starts, horizon, w);
  return w;
}

// ---------------------------------------------------------------------------
// Value rollout

namespace {

MatrixXd transition(const SubnetModel& model, const MatrixXd& x, const MatrixXd& u,
                    const MatrixXd& e) {
  const Index batch = x.rows();
  switch (model.noise) {
    case NoiseStructure::output_error: {
      MatrixXd in(batch, x.cols() + u.cols());
      in << x, u;
      return mlp_forward(model.state_spec, model.state, in);
    }
    case NoiseStructure::linear_innovation: {
      MatrixXd in(batch, x.cols() + u.cols());
      in << x, u;
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> k(
          model.gain.data(), static_cast<Index>(model.n_x), static_cast<Index>(model.n_y));
      MatrixXd next = mlp_forward(model.state_spec, model.state, in);
      next.noalias() += e * k.transpose();
      return next;
    }
    case NoiseStructure::general_innovation: {
      MatrixXd in(batch, x.cols() + u.cols() + e.cols());
      in << x, u, e;
      return mlp_forward(model.state_spec, model.state, in);
    }
  }
  return x;
}

}  // namespace

Rollout rollout(const SubnetModel& model, const MatrixXd& initial_state,
                const WindowBatch& windows, InnovationMode mode) {
  require(initial_state.rows() == static_cast<Index>(windows.batch()) &&
              initial_state.cols() == static_cast<Index>(model.n_x),
          "rollout: initial state must be batch x n_x");
  Rollout r;
  const std::size_t horizon = windows.horizon();
  r.outputs.reserve(horizon);
  r.states.reserve(horizon);
  r.innovations.reserve(horizon);
  MatrixXd x = initial_state;
  for (std::size_t k = 0; k < horizon; ++k) {
    MatrixXd y_hat = mlp_forward(model.output_spec, model.output, x);
    MatrixXd e = mode == InnovationMode::teacher_forced
                     ? MatrixXd(windows.y[k] - y_hat)
                     : MatrixXd::Zero(y_hat.rows(), y_hat.cols()).eval();
    if (!y_hat.allFinite() || !x.allFinite()) throw RolloutDivergence(k, first_bad_row(y_hat, x));
    r.states.push_back(x);
    if (k + 1 < horizon) x = transition(model, x, windows.u[k], e);
    r.outputs.push_back(std::move(y_hat));
    r.innovations.push_back(std::move(e));
  }
  return r;
}

Rollout rollout(const SubnetModel& model, const WindowBatch& windows, InnovationMode mode) {
  require(model.has_encoder, "rollout: model has no encoder; pass an initial state");
  const MatrixXd x0 = mlp_forward(model.encoder_spec, model.encoder, windows.encoder_input);
  return rollout(model, x0, windows, mode);
}

// ---------------------------------------------------------------------------
// Tape rollout

ModelNodes bind(ad::Tape& tape, const SubnetModel& model) {
  ModelNodes n;
  n.encoder = bind(tape, model.encoder_spec, model.encoder, kEncoderParams);
  n.state = bind(tape, model.state_spec, model.state, kStateParams);
  n.output = bind(tape, model.output_spec, model.output, kOutputParams);
  if (model.noise == NoiseStructure::linear_innovation) {
    tape.register_parameter(kGainParams, model.gain);
    n.gain = tape.parameter(kGainParams, 0, static_cast<Index>(model.n_x),
                            static_cast<Index>(model.n_y));
  }
  return n;
}

ad::NodeId encode(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                  ad::NodeId encoder_input) {
  return mlp_forward(tape, model.encoder_spec, nodes.encoder, encoder_input);
}

RolloutNodes rollout(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                     ad::NodeId initial_state, const WindowBatch& windows, InnovationMode mode) {
  const std::size_t horizon = windows.horizon();
  RolloutNodes r;
  r.outputs.reserve(horizon);
  r.states.reserve(horizon);
  r.innovations.reserve(horizon);
  ad::NodeId x = initial_state;
  for (std::size_t k = 0; k < horizon; ++k) {
    const ad::NodeId y_hat = mlp_forward(tape, model.output_spec, nodes.output, x);
    if (!tape.value(y_hat).allFinite() || !tape.value(x).allFinite()) {
      throw RolloutDivergence(k, first_bad_row(tape.value(y_hat), tape.value(x)));
    }
    const ad::NodeId measured = tape.constant(windows.y[k]);
    const ad::NodeId e = mode == InnovationMode::teacher_forced
                             ? tape.sub(measured, y_hat)
                             : tape.constant(MatrixXd::Zero(windows.y[k].rows(),
                                                            windows.y[k].cols()));
    r.states.push_back(x);
    r.outputs.push_back(y_hat);
    r.innovations.push_back(e);
    if (k + 1 == horizon) break;
    const ad::NodeId u = tape.constant(windows.u[k]);
    switch (model.noise) {
      case NoiseStructure::output_error: {
        const std::array<ad::NodeId, 2> parts{x, u};
        x = mlp_forward(tape, model.state_spec, nodes.state, tape.concat(parts));
        break;
      }
      case NoiseStructure::linear_innovation: {
        const std::array<ad::NodeId, 2> parts{x, u};
        const ad::NodeId f = mlp_forward(tape, model.state_spec, nodes.state, tape.concat(parts));
        x = tape.add(f, tape.affine(e, *nodes.gain));
        break;
      }
      case NoiseStructure::general_innovation: {
        const std::array<ad::NodeId, 3> parts{x, u, e};
        x = mlp_forward(tape, model.state_spec, nodes.state, tape.concat(parts));
        break;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Simulation and k-step prediction

Simulation simulate(const SubnetModel& model, const IoDataset& data, InnovationMode mode) {
  model.validate();
  require(data.n_u() == model.n_u && data.n_y() == model.n_y,
          "simulate: dataset channels (" + std::to_string(data.n_u()) + ", " +
              std::to_string(data.n_y()) + ") do not match model (" + std::to_string(model.n_u) +
              ", " + std::to_string(model.n_y) + ")");
  const std::size_t n = model.lag();
  require(data.size() > n, "simulate: dataset length " + std::to_string(data.size()) +
                               " must exceed the encoder lag " + std::to_string(n));
  const IoDataset normalized = model.norm.normalize(data);

  const std::size_t t0 = model.has_encoder ? n : 0;
  const std::array<std::size_t, 1> start{t0};
  WindowBatch w;
  w.starts = {t0};
  cut_steps(normalized, start, data.size() - t0, w);
  MatrixXd x0;
  if (model.has_encoder) {
    x0 = mlp_forward(model.encoder_spec, model.encoder,
                     MatrixXd(encoder_input(model, normalized, t0)));
  } else {
    x0 = MatrixXd::Zero(1, static_cast<Index>(model.n_x));
  }
  const Rollout r = rollout(model, x0, w, mode);

  Simulation sim;
  sim.skip = n;
  MatrixXd normalized_out(static_cast<Index>(data.size()), static_cast<Index>(model.n_y));
  normalized_out.setConstant(std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < r.outputs.size(); ++k) {
    const std::size_t row = t0 + k;
    if (row >= n) normalized_out.row(static_cast<Index>(row)) = r.outputs[k].row(0);
  }
  sim.y = model.norm.denormalize_y(normalized_out);
  return sim;
}

KStepPredictions kstep_predictions(const SubnetModel& model, const IoDataset& data,
                                   std::size_t k_max) {
  model.validate();
  require(model.has_encoder, "kstep_predictions: model has no encoder");
  require(data.n_u() == model.n_u && data.n_y() == model.n_y,
          "kstep_predictions: dataset channels do not match model");
  const std::size_t n = model.lag();
  require(data.size() >= n + k_max + 1,
          "kstep_predictions: dataset too short for k_max=" + std::to_string(k_max));
  const IoDataset normalized = model.norm.normalize(data);

  KStepPredictions out;
  out.k_max = k_max;
  for (std::size_t t = n; t + k_max < data.size(); ++t) out.starts.push_back(t);
  const auto count = static_cast<Index>(out.starts.size());
  out.predicted.assign(k_max + 1, MatrixXd(count, static_cast<Index>(model.n_y)));
  out.measured.assign(k_max + 1, MatrixXd(count, static_cast<Index>(model.n_y)));

  constexpr std::size_t kChunk = 2048;
  for (std::size_t begin = 0; begin < out.starts.size(); begin += kChunk) {
    const std::size_t len = std::min(kChunk, out.starts.size() - begin);
    const std::span<const std::size_t> chunk(out.starts.data() + begin, len);
    const WindowBatch w = make_windows(model, normalized, chunk, k_max + 1);
    const Rollout r = rollout(model, w, InnovationMode::teacher_forced);
    for (std::size_t k = 0; k <= k_max; ++k) {
      out.predicted[k].middleRows(static_cast<Index>(begin), static_cast<Index>(len)) =
          model.norm.denormalize_y(r.outputs[k]);
      for (std::size_t b = 0; b < len; ++b) {
        out.measured[k].row(static_cast<Index>(begin + b)) =
            data.y.row(static_cast<Index>(chunk[b] + k));
      }
    }
  }
  return out;
}

void save_kstep_csv(const KStepPredictions& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  const Index n_y = p.predicted.empty() ? 0 : p.predicted.front().cols();
  out << "t,k";
  if (n_y == 1) {
    out << ",y_hat,y_measured";
  } else {
    for (Index c = 0; c < n_y; ++c) out << ",y_hat" << c + 1;
    for (Index c = 0; c < n_y; ++c) out << ",y_measured" << c + 1;
  }
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < p.starts.size(); ++i) {
    for (std::size_t k = 0; k <= p.k_max; ++k) {
      out << p.starts[i] << ',' << k;
      for (Index c = 0; c < n_y; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", p.predicted[k](static_cast<Index>(i), c));
        out << ',' << buf;
      }
      for (Index c = 0; c < n_y; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", p.measured[k](static_cast<Index>(i), c));
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all integers and reals little-endian):
//   "SUBNETCK" | u32 version | u64 meta_len | meta JSON | u64 count |
//   count x f64 payload | u64 FNV-1a of the payload bytes
// The payload concatenates encoder, state, output, gain, u_mean, u_std,
// y_mean, y_std in that order; the JSON lists each block's length.

namespace {

constexpr std::array<char, 8> kMagic{'S', 'U', 'B', 'N', 'E', 'T', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json spec_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},   {"output_dim", s.output_dim},
          {"hidden_layers", s.hidden_layers}, {"hidden_width", s.hidden_width},
          {"activation", to_string(s.activation)}, {"bypass", s.bypass}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.output_dim = j.at("output_dim").get<std::size_t>();
  s.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  s.hidden_width = j.at("hidden_width").get<std::size_t>();
  s.activation = activation_from_string(j.at("activation").get<std::string>());
  s.bypass = j.at("bypass").get<bool>();
  return s;
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::corrupt, "checkpoint '" + path_.string() + "' is truncated");
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  const std::filesystem::path& path_;
};

}  // namespace

void save_model(const SubnetModel& model, const std::filesystem::path& path) {
  model.validate();
  std::vector<std::pair<std::string, std::vector<double>>> blocks;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  blocks.emplace_back("encoder", model.encoder.flat);
  blocks.emplace_back("state", model.state.flat);
  blocks.emplace_back("output", model.output.flat);
  blocks.emplace_back("gain", model.gain);
  blocks.emplace_back("u_mean", vec(model.norm.u_mean));
  blocks.emplace_back("u_std", vec(model.norm.u_std));
  blocks.emplace_back("y_mean", vec(model.norm.y_mean));
  blocks.emplace_back("y_std", vec(model.norm.y_std));

  nlohmann::json meta;
  meta["n_x"] = model.n_x;
  meta["n_u"] = model.n_u;
  meta["n_y"] = model.n_y;
  meta["n_a"] = model.n_a;
  meta["n_b"] = model.n_b;
  meta["noise"] = to_string(model.noise);
  meta["has_encoder"] = model.has_encoder;
  meta["nets"] = {{"encoder", spec_json(model.encoder_spec)},
                  {"state", spec_json(model.state_spec)},
                  {"output", spec_json(model.output_spec)}};
  std::size_t count = 0;
  for (const auto& [name, values] : blocks) {
    meta["blocks"].push_back({{"name", name}, {"count", values.size()}});
    count += values.size();
  }
  const std::string meta_text = meta.dump(2);

  std::string payload;
  payload.reserve(count * 8);
  for (const auto& [name, values] : blocks) {
    for (double v : values) put_u64(payload, std::bit_cast<std::uint64_t>(v));
  }

  std::string out(kMagic.begin(), kMagic.end());
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta_text.size());
  out += meta_text;
  put_u64(out, count);
  out += payload;
  put_u64(out, fnv1a(payload));

  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

SubnetModel load_model(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::io, "cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(bytes, path);

  const auto magic = in.take(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    fail(ErrorKind::corrupt, "'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::version, "checkpoint '" + path.string() + "' has version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  const std::uint64_t meta_len = in.u64();
  if (meta_len > in.remaining()) fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' is truncated");
  const auto meta_text = in.take(meta_len);

  SubnetModel m;
  std::vector<std::pair<std::string, std::size_t>> layout;
  try {
    const auto meta = nlohmann::json::parse(meta_text);
    m.n_x = meta.at("n_x").get<std::size_t>();
    m.n_u = meta.at("n_u").get<std::size_t>();
    m.n_y = meta.at("n_y").get<std::size_t>();
    m.n_a = meta.at("n_a").get<std::size_t>();
    m.n_b = meta.at("n_b").get<std::size_t>();
    m.noise = noise_structure_from_string(meta.at("noise").get<std::string>());
    m.has_encoder = meta.at("has_encoder").get<bool>();
    m.encoder_spec = spec_from_json(meta.at("nets").at("encoder"));
    m.state_spec = spec_from_json(meta.at("nets").at("state"));
    m.output_spec = spec_from_json(meta.at("nets").at("output"));
    for (const auto& b : meta.at("blocks")) {
      layout.emplace_back(b.at("name").get<std::string>(), b.at("count").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' has invalid metadata: " + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' has invalid metadata: " + e.what());
  }

  const std::uint64_t count = in.u64();
  std::size_t expected = 0;
  for (const auto& [name, n] : layout) expected += n;
  if (count != expected || layout.size() != 8) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' payload layout is inconsistent");
  }
  if (count > in.remaining() / 8) fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' is truncated");
  const auto payload = in.take(count * 8);
  const std::uint64_t checksum = in.u64();
  if (checksum != fnv1a(payload)) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' checksum mismatch");
  }
  if (in.remaining() != 0) fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' has trailing bytes");

  std::size_t pos = 0;
  auto next_block = [&](std::size_t index) {
    std::vector<double> v(layout[index].second);
    for (double& x : v) {
      std::uint64_t bits = 0;
      for (int i = 7; i >= 0; --i) {
        bits = (bits << 8) | static_cast<unsigned char>(payload[pos + static_cast<std::size_t>(i)]);
      }
      x = std::bit_cast<double>(bits);
      pos += 8;
    }
    return v;
  };
  auto to_vec = [](const std::vector<double>& v) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size())));
  };
  try {
    m.encoder = make_params(m.encoder_spec);
    m.state = make_params(m.state_spec);
    m.output = make_params(m.output_spec);
  } catch (const Error& e) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' has invalid net specs: " + e.what());
  }
  m.encoder.flat = next_block(0);
  m.state.flat = next_block(1);
  m.output.flat = next_block(2);
  m.gain = next_block(3);
  m.norm.u_mean = to_vec(next_block(4));
  m.norm.u_std = to_vec(next_block(5));
  m.norm.y_mean = to_vec(next_block(6));
  m.norm.y_std = to_vec(next_block(7));
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::corrupt, "checkpoint '" + path.string() + "' is inconsistent: " + e.what());
  }
  return m;
}

}  // namespace subnet
