#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subnet/autodiff.hpp"
#include "subnet/data.hpp"
#include "subnet/error.hpp"
#include "subnet/nets.hpp"

namespace subnet {

enum class NoiseStructure { output_error, linear_innovation, general_innovation };

const char* to_string(NoiseStructure n) noexcept;
NoiseStructure noise_structure_from_string(const std::string& name);

// Per-channel affine scaling: normalized = (raw - mean) / std.
struct Normalization {
  Eigen::VectorXd u_mean, u_std;
  Eigen::VectorXd y_mean, y_std;

  static Normalization identity(std::size_t n_u, std::size_t n_y);
  void validate() const;

  Eigen::MatrixXd normalize_u(const Eigen::MatrixXd& u) const;
  Eigen::MatrixXd normalize_y(const Eigen::MatrixXd& y) const;
  Eigen::MatrixXd denormalize_y(const Eigen::MatrixXd& y) const;
  IoDataset normalize(const IoDataset& data) const;
};

// Hyperparameters that fix the shape of a model.
struct ModelStructure {
  std::size_t n_x = 4;
  std::size_t n_a = 10;  // past outputs seen by the encoder (plus y_t itself)
  std::size_t n_b = 10;  // past inputs seen by the encoder
  NoiseStructure noise = NoiseStructure::output_error;
  // Hidden-layer template shared by encoder, state and output nets; the
  // input/output dims are filled in from the channel counts.
  std::size_t hidden_layers = 2;
  std::size_t hidden_width = 64;
  Activation activation = Activation::tanh;
  bool bypass = true;
};

// Parameter buffer ids used on tapes and by the optimizer.
inline constexpr ad::ParamId kEncoderParams = 0;
inline constexpr ad::ParamId kStateParams = 1;
inline constexpr ad::ParamId kOutputParams = 2;
inline constexpr ad::ParamId kGainParams = 3;
inline constexpr ad::ParamId kInitialStateParams = 4;

struct SubnetModel {
  std::size_t n_x = 0;
  std::size_t n_u = 0;
  std::size_t n_y = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  NoiseStructure noise = NoiseStructure::output_error;
  MlpSpec encoder_spec, state_spec, output_spec;
  MlpParams encoder, state, output;
  std::vector<double> gain;  // K, row-major n_x x n_y; linear innovation only
  Normalization norm;
  // Models trained with per-section initial states have no usable encoder;
  // their simulations start from the zero state.
  bool has_encoder = true;

  std::size_t lag() const { return n_a > n_b ? n_a : n_b; }
  std::size_t encoder_input_dim() const { return n_b * n_u + (n_a + 1) * n_y; }
  void validate() const;
};

// Xavier-initialized model; K starts at zero.
SubnetModel make_model(const ModelStructure& structure, std::size_t n_u, std::size_t n_y,
                       Normalization norm, std::uint64_t seed);

// Encoder input for start index t (0-based): u[t-n_b .. t-1] then y[t-n_a .. t],
// oldest first, channels interleaved per sample. Data must be normalized.
Eigen::RowVectorXd encoder_input(const SubnetModel& model, const IoDataset& normalized,
                                 std::size_t t);

// u_window is n_b x n_u, y_window is (n_a + 1) x n_y, both normalized.
Eigen::VectorXd encode(const SubnetModel& model, const Eigen::MatrixXd& u_window,
                       const Eigen::MatrixXd& y_window);

// A batch of training windows cut from one normalized record.
struct WindowBatch {
  std::vector<std::size_t> starts;
  Eigen::MatrixXd encoder_input;  // batch x encoder_input_dim
  std::vector<Eigen::MatrixXd> u;  // horizon entries, batch x n_u
  std::vector<Eigen::MatrixXd> y;  // horizon entries, batch x n_y

  std::size_t horizon() const { return u.size(); }
  std::size_t batch() const { return starts.size(); }
};

// Windows starting at each t in `starts` (0-based), each t >= lag() and
// t + horizon <= N.
WindowBatch make_windows(const SubnetModel& model, const IoDataset& normalized,
                         std::span<const std::size_t> starts, std::size_t horizon);

enum class InnovationMode {
  teacher_forced,  // e = y_measured - y_hat at each step
  free_run,        // e = 0, measured y unused after the encoder window
};

// Value-only rollout (no tape). Entries are indexed by step k.
struct Rollout {
  std::vector<Eigen::MatrixXd> outputs;      // batch x n_y, normalized units
  std::vector<Eigen::MatrixXd> states;       // batch x n_x
  std::vector<Eigen::MatrixXd> innovations;  // batch x n_y
};

Rollout rollout(const SubnetModel& model, const Eigen::MatrixXd& initial_state,
                const WindowBatch& windows, InnovationMode mode);
Rollout rollout(const SubnetModel& model, const WindowBatch& windows,
                InnovationMode mode = InnovationMode::teacher_forced);

// Nodes of all trainable model buffers on one tape.
struct ModelNodes {
  MlpNodes encoder, state, output;
  std::optional<ad::NodeId> gain;
};

// Registers the model buffers under the k*Params ids and creates their views.
// The model must outlive the tape.
ModelNodes bind(ad::Tape& tape, const SubnetModel& model);

ad::NodeId encode(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                  ad::NodeId encoder_input);

struct RolloutNodes {
  std::vector<ad::NodeId> outputs;
  std::vector<ad::NodeId> states;
  std::vector<ad::NodeId> innovations;
};

// Differentiable rollout from `initial_state` (batch x n_x). Throws
// NumericError carrying k when a step produces non-finite values.
RolloutNodes rollout(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                     ad::NodeId initial_state, const WindowBatch& windows,
                     InnovationMode mode = InnovationMode::teacher_forced);

// Thrown by rollouts when a step produces non-finite values; `index()` is the
// step k and `row` the offending batch row.
class RolloutDivergence : public NumericError {
 public:
  RolloutDivergence(std::size_t step, std::size_t row)
      : NumericError("rollout diverged at step k=" + std::to_string(step) + " (batch row " +
                         std::to_string(row) + ")",
                     step),
        row(row) {}

  std::size_t row;
};

struct Simulation {
  Eigen::MatrixXd y;  // N x n_y in original units; the first `skip` rows are NaN
  std::size_t skip = 0;
};

// Encoder-initialized simulation over the whole record. Models without an
// encoder start from x = 0 at sample 0 and the same `lag()` samples are skipped.
Simulation simulate(const SubnetModel& model, const IoDataset& data,
                    InnovationMode mode = InnovationMode::free_run);

struct KStepPredictions {
  std::vector<std::size_t> starts;  // 0-based t
  std::size_t k_max = 0;
  // Indexed by k; rows follow `starts`, original units.
  std::vector<Eigen::MatrixXd> predicted;
  std::vector<Eigen::MatrixXd> measured;
};

// y_hat_{t|t+k} for every t in [lag(), N - 1 - k_max], with teacher-forced
// innovations.
KStepPredictions kstep_predictions(const SubnetModel& model, const IoDataset& data,
                                   std::size_t k_max);

void save_kstep_csv(const KStepPredictions& predictions, const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_model(const SubnetModel& model, const std::filesystem::path& path);
SubnetModel load_model(const std::filesystem::path& path);

}  // namespace subnet
