#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace subnet {

// Paired input/output record; row k holds sample k in temporal order.
struct IoDataset {
  Eigen::MatrixXd u;  // N x n_u
  Eigen::MatrixXd y;  // N x n_y
  std::string name;

  std::size_t size() const { return static_cast<std::size_t>(u.rows()); }
  std::size_t n_u() const { return static_cast<std::size_t>(u.cols()); }
  std::size_t n_y() const { return static_cast<std::size_t>(y.cols()); }
};

// Equal row counts, at least one channel each, finite values.
void validate(const IoDataset& data);

// Contiguous rows [begin, begin + count).
IoDataset slice(const IoDataset& data, std::size_t begin, std::size_t count,
                std::string name = {});

enum class SimVariant { base, linear_process_noise, nonlinear_process_noise };

const char* to_string(SimVariant v) noexcept;
SimVariant sim_variant_from_string(const std::string& name);

// Two-state benchmark system with two stable equilibria near +-[0.68, 0.68]:
//   x1' = x1 / (1.2 + x2^2) + 0.4 x2 + g1
//   x2' = x2 / (1.2 + x1^2) + 0.4 x1 + u + g2
//   y   = x1 + e
// with g = 0 (base), g_i = K_i e (linear) or g_i = K_i x_i e (nonlinear).
struct SimSystemConfig {
  SimVariant variant = SimVariant::base;
  double sigma_k = 0.0;
  double sigma_e = 0.082;
  double input_lo = -2.0;
  double input_hi = 2.0;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

void validate(const SimSystemConfig& config);

// K = sigma_k * K0 / |K0|_2 with K0 = [1.0, -0.9].
Eigen::Vector2d process_noise_gain(double sigma_k);

Eigen::Vector2d sim_system_step(const Eigen::Vector2d& x, double u, double e, SimVariant variant,
                                const Eigen::Vector2d& gain);

// Simulates from x = 0 with i.i.d. u ~ U(lo, hi) and e ~ N(0, sigma_e^2).
IoDataset generate_sim_system(const SimSystemConfig& config);

struct DataSplits {
  IoDataset train;
  IoDataset val;
  IoDataset test;
};

inline constexpr std::size_t kSimTrainSamples = 10000;
inline constexpr std::size_t kSimValSamples = 3000;
inline constexpr std::size_t kSimTestSamples = 10000;
inline constexpr double kSimNoiseStd = 0.082;

// Three independent realisations (10000 / 3000 / 10000 samples). Train and
// validation carry noise with `base.sigma_e`; the test record is noiseless.
DataSplits simulation_splits(std::uint64_t seed, const SimSystemConfig& base = {});

// Header u1..u{n_u},y1..y{n_y}; values written with 17 significant digits.
void save_csv(const IoDataset& data, const std::filesystem::path& path);
IoDataset load_csv(const std::filesystem::path& path, std::size_t n_u, std::size_t n_y);

// Any comma-separated file with a header row. Numeric fields parse as
// doubles ("nan" and "inf" accepted); other fields are kept as text.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
};

CsvTable load_table(const std::filesystem::path& path);

// Contiguous, in-order split. Warns when trailing rows are dropped.
DataSplits slice_splits(const IoDataset& data, std::size_t train_len, std::size_t val_len,
                        std::size_t test_len);

}  // namespace subnet
