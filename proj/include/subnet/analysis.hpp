#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "subnet/data.hpp"
#include "subnet/model.hpp"

namespace subnet {

// RMS error over rows [skip, N) divided by the population standard deviation
// of the measured signal over the same rows. With several output channels the
// per-channel NRMS values are combined by their root mean square.
double nrms(const Eigen::MatrixXd& y_measured, const Eigen::MatrixXd& y_predicted,
            std::size_t skip = 0);

// Free-run simulation NRMS of `model` on `data`, skipping the encoder window.
double simulation_nrms(const SubnetModel& model, const IoDataset& data);

struct KStepProfile {
  std::vector<double> nrms;  // index k = 0..k_max
  std::size_t marker = 0;    // truncation length T used in training
};

// NRMS of y_hat_{t|t+k} against y_{t+k} over every valid start t, normalized
// by the population standard deviation of the measured record.
KStepProfile kstep_nrms(const SubnetModel& model, const IoDataset& data, std::size_t k_max,
                        std::size_t marker = 0);

void save_kstep_profile_csv(const KStepProfile& profile, const std::filesystem::path& path);

// Variance of V^d in units of Var(v_t) for white noise, with the section
// autocorrelation R(t) = max(0, 1 - t/T):
//   G(d) = (m_d + 2 sum_{t=1}^{m_d-1} (m_d - t) R(t d)) / m_d^2
double g_of_d(std::size_t d, std::size_t horizon, std::size_t m_d);

// Number of sections with spacing d on a record of N samples:
// floor((N - T + 1) / d).
std::size_t section_count(std::size_t samples, std::size_t horizon, std::size_t d);

struct OverlapVarianceResult {
  std::size_t horizon = 0;
  std::size_t samples = 0;
  std::size_t trials = 0;
  double var_d1 = 0.0;
  double var_dT = 0.0;
  // Standard error of var_d1 - var_dT from the paired per-trial values.
  double se_difference = 0.0;
  double g_1 = 0.0;
  double g_T = 0.0;

  double empirical_ratio() const { return var_d1 / var_dT; }
  double analytic_ratio() const { return g_1 / g_T; }
};

// Monte-Carlo variance of V^1 and V^T at the true parameters, where
// v_t = (1/T) sum_k e_{t+k}^2 for standard normal white noise e.
// Trials use independent streams derived from `seed`.
OverlapVarianceResult overlap_variance_mc(std::size_t horizon, std::size_t samples,
                                          std::size_t trials, std::uint64_t seed,
                                          std::size_t threads = 1);

void save_overlap_csv(const std::vector<OverlapVarianceResult>& rows,
                      const std::filesystem::path& path);

}  // namespace subnet
