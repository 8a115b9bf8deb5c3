#include "subnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "subnet/error.hpp"
#include "subnet/rng.hpp"

namespace subnet {

using Eigen::Index;

double nrms(const Eigen::MatrixXd& y_measured, const Eigen::MatrixXd& y_predicted,
            std::size_t skip) {
  require(y_measured.rows() == y_predicted.rows() && y_measured.cols() == y_predicted.cols(),
          "nrms: measured and predicted shapes differ");
  const auto n = static_cast<std::size_t>(y_measured.rows());
  require(skip < n, "nrms: skip " + std::to_string(skip) + " leaves no samples of " +
                        std::to_string(n));
  const auto rows = static_cast<Index>(n - skip);
  const auto s = static_cast<Index>(skip);
  double sum_sq = 0.0;
  for (Index c = 0; c < y_measured.cols(); ++c) {
    const Eigen::VectorXd ym = y_measured.col(c).segment(s, rows);
    const Eigen::VectorXd yp = y_predicted.col(c).segment(s, rows);
    const double mean = ym.mean();
    const double sigma = std::sqrt((ym.array() - mean).square().mean());
    if (!(sigma > 0.0)) {
      fail(ErrorKind::degenerate, "nrms: measured channel " + std::to_string(c + 1) +
                                      " has zero standard deviation");
    }
    const double rms = std::sqrt((ym - yp).squaredNorm() / static_cast<double>(rows));
    const double ratio = rms / sigma;
    sum_sq += ratio * ratio;
  }
  return std::sqrt(sum_sq / static_cast<double>(y_measured.cols()));
}

double simulation_nrms(const SubnetModel& model, const IoDataset& data) {
  const Simulation sim = simulate(model, data, InnovationMode::free_run);
  return nrms(data.y, sim.y, sim.skip);
}

KStepProfile kstep_nrms(const SubnetModel& model, const IoDataset& data, std::size_t k_max,
                        std::size_t marker) {
  const KStepPredictions p = kstep_predictions(model, data, k_max);
  Eigen::VectorXd sigma(data.y.cols());
  for (Index c = 0; c < data.y.cols(); ++c) {
    const double mean = data.y.col(c).mean();
    sigma(c) = std::sqrt((data.y.col(c).array() - mean).square().mean());
    if (!(sigma(c) > 0.0)) {
      fail(ErrorKind::degenerate, "kstep_nrms: measured channel " + std::to_string(c + 1) +
                                      " has zero standard deviation");
    }
  }
  KStepProfile profile;
  profile.marker = marker;
  const auto count = static_cast<double>(p.starts.size());
  for (std::size_t k = 0; k <= k_max; ++k) {
    double sum_sq = 0.0;
    for (Index c = 0; c < data.y.cols(); ++c) {
      const double mse = (p.predicted[k].col(c) - p.measured[k].col(c)).squaredNorm() / count;
      sum_sq += mse / (sigma(c) * sigma(c));
    }
    profile.nrms.push_back(std::sqrt(sum_sq / static_cast<double>(data.y.cols())));
  }
  return profile;
}

void save_kstep_profile_csv(const KStepProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "k,nrms,is_truncation_length\n";
  char buf[64];
  for (std::size_t k = 0; k < profile.nrms.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d\n", k, profile.nrms[k],
                  profile.marker != 0 && k == profile.marker ? 1 : 0);
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

double g_of_d(std::size_t d, std::size_t horizon, std::size_t m_d) {
  require(d >= 1 && horizon >= 1 && m_d >= 1, "g_of_d: d, T and m_d must be >= 1");
  const auto m = static_cast<double>(m_d);
  const auto t_len = static_cast<double>(horizon);
  double acc = 0.0;
  // R(t d) vanishes once t d >= T.
  for (std::size_t t = 1; t < m_d && t * d < horizon; ++t) {
    const double r = 1.0 - static_cast<double>(t * d) / t_len;
    acc += (m - static_cast<double>(t)) * r;
  }
  return (m + 2.0 * acc) / (m * m);
}

std::size_t section_count(std::size_t samples, std::size_t horizon, std::size_t d) {
  require(d >= 1 && horizon >= 1, "section_count: d and T must be >= 1");
  require(samples >= horizon, "section_count: record shorter than T");
  return (samples - horizon + 1) / d;
}

OverlapVarianceResult overlap_variance_mc(std::size_t horizon, std::size_t samples,
                                          std::size_t trials, std::uint64_t seed,
                                          std::size_t threads) {
  require(trials >= 2, "overlap_variance_mc: need at least two trials");
  const std::size_t m1 = section_count(samples, horizon, 1);
  const std::size_t mT = section_count(samples, horizon, horizon);
  require(mT >= 1, "overlap_variance_mc: record too short for one section");

  std::vector<double> v1(trials), vT(trials);
  auto run = [&](std::size_t begin, std::size_t end) {
    std::vector<double> prefix(samples + 1);
    for (std::size_t trial = begin; trial < end; ++trial) {
      Rng rng = Rng::derive(seed, trial);
      prefix[0] = 0.0;
      for (std::size_t k = 0; k < samples; ++k) {
        const double e = rng.normal();
        prefix[k + 1] = prefix[k] + e * e;
      }
      auto v = [&](std::size_t t) {
        return (prefix[t + horizon] - prefix[t]) / static_cast<double>(horizon);
      };
      double s1 = 0.0;
      for (std::size_t k = 0; k < m1; ++k) s1 += v(k);
      double sT = 0.0;
      for (std::size_t k = 0; k < mT; ++k) sT += v(k * horizon);
      v1[trial] = s1 / static_cast<double>(m1);
      vT[trial] = sT / static_cast<double>(mT);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, trials);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) {
    pool.emplace_back(run, trials * w / workers, trials * (w + 1) / workers);
  }
  run(0, trials / workers);
  for (auto& t : pool) t.join();

  auto variance = [](const std::vector<double>& a) {
    double mean = 0.0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    double s = 0.0;
    for (double x : a) s += (x - mean) * (x - mean);
    return s / static_cast<double>(a.size() - 1);
  };
  OverlapVarianceResult r;
  r.horizon = horizon;
  r.samples = samples;
  r.trials = trials;
  r.var_d1 = variance(v1);
  r.var_dT = variance(vT);
  // Per-trial contributions to the two variances, paired by trial.
  const auto n = static_cast<double>(trials);
  double mean1 = 0.0, meanT = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    mean1 += v1[i];
    meanT += vT[i];
  }
  mean1 /= n;
  meanT /= n;
  std::vector<double> diff(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    diff[i] = (v1[i] - mean1) * (v1[i] - mean1) - (vT[i] - meanT) * (vT[i] - meanT);
  }
  r.se_difference = std::sqrt(variance(diff) / n);
  r.g_1 = g_of_d(1, horizon, m1);
  r.g_T = g_of_d(horizon, horizon, mT);
  return r;
}

void save_overlap_csv(const std::vector<OverlapVarianceResult>& rows,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << "T,N,trials,var_d1,var_dT,se_difference,empirical_ratio,G_1,G_T,analytic_ratio\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.horizon,
                  r.samples, r.trials, r.var_d1, r.var_dT, r.se_difference, r.empirical_ratio(),
                  r.g_1, r.g_T, r.analytic_ratio());
    out << buf;
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

}  // namespace subnet
