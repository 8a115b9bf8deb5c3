#include "subnet/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "subnet/error.hpp"
#include "subnet/log.hpp"
#include "subnet/rng.hpp"

namespace subnet {

void validate(const IoDataset& data) {
  if (data.u.rows() != data.y.rows()) {
    fail(ErrorKind::contract, "dataset '" + data.name + "': u has " +
                                  std::to_string(data.u.rows()) + " rows but y has " +
                                  std::to_string(data.y.rows()));
  }
  if (data.u.cols() < 1 || data.y.cols() < 1) {
    fail(ErrorKind::contract, "dataset '" + data.name + "' needs at least one u and one y channel");
  }
  if (!data.u.allFinite() || !data.y.allFinite()) {
    fail(ErrorKind::numeric, "dataset '" + data.name + "' contains non-finite values");
  }
}

IoDataset slice(const IoDataset& data, std::size_t begin, std::size_t count, std::string name) {
  require(begin + count <= data.size(), "slice: rows out of range");
  IoDataset out;
  const auto b = static_cast<Eigen::Index>(begin);
  const auto c = static_cast<Eigen::Index>(count);
  out.u = data.u.middleRows(b, c);
  out.y = data.y.middleRows(b, c);
  out.name = name.empty() ? data.name : std::move(name);
  return out;
}

const char* to_string(SimVariant v) noexcept {
  switch (v) {
    case SimVariant::base: return "base";
    case SimVariant::linear_process_noise: return "linear-process-noise";
    case SimVariant::nonlinear_process_noise: return "nonlinear-process-noise";
  }
  return "unknown";
}

SimVariant sim_variant_from_string(const std::string& name) {
  if (name == "base") return SimVariant::base;
  if (name == "linear-process-noise") return SimVariant::linear_process_noise;
  if (name == "nonlinear-process-noise") return SimVariant::nonlinear_process_noise;
  fail(ErrorKind::config, "unknown system variant '" + name +
                              "' (expected base, linear-process-noise or nonlinear-process-noise)");
}

void validate(const SimSystemConfig& config) {
  if (!(config.input_hi > config.input_lo)) {
    fail(ErrorKind::config, "input range must satisfy hi > lo");
  }
  if (config.sigma_k < 0.0 || config.sigma_e < 0.0) {
    fail(ErrorKind::config, "sigma_k and sigma_e must be >= 0");
  }
}

Eigen::Vector2d process_noise_gain(double sigma_k) {
  const Eigen::Vector2d k0(1.0, -0.9);
  return sigma_k * k0 / k0.norm();
}

Eigen::Vector2d sim_system_step(const Eigen::Vector2d& x, double u, double e, SimVariant variant,
                                const Eigen::Vector2d& gain) {
  Eigen::Vector2d next;
  next(0) = x(0) / (1.2 + x(1) * x(1)) + 0.4 * x(1);
  next(1) = x(1) / (1.2 + x(0) * x(0)) + 0.4 * x(0) + u;
  switch (variant) {
    case SimVariant::base:
      break;
    case SimVariant::linear_process_noise:
      next += gain * e;
      break;
    case SimVariant::nonlinear_process_noise:
      next += gain.cwiseProduct(x) * e;
      break;
  }
  return next;
}

IoDataset generate_sim_system(const SimSystemConfig& config) {
  validate(config);
  const Eigen::Vector2d gain = process_noise_gain(config.sigma_k);
  Rng input_rng = Rng::derive(config.seed, 0);
  Rng noise_rng = Rng::derive(config.seed, 1);

  IoDataset data;
  const auto n = static_cast<Eigen::Index>(config.samples);
  data.u.resize(n, 1);
  data.y.resize(n, 1);
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = input_rng.uniform(config.input_lo, config.input_hi);
    const double e = config.sigma_e > 0.0 ? config.sigma_e * noise_rng.normal() : 0.0;
    data.u(k, 0) = u;
    data.y(k, 0) = x(0) + e;
    x = sim_system_step(x, u, e, config.variant, gain);
    if (!(std::abs(x(0)) <= 1e6 && std::abs(x(1)) <= 1e6)) {
      throw NumericError("simulated system diverged at step " + std::to_string(k),
                         static_cast<std::size_t>(k));
    }
  }
  return data;
}

DataSplits simulation_splits(std::uint64_t seed, const SimSystemConfig& base) {
  auto make = [&](std::size_t samples, std::uint64_t stream, double sigma_e, const char* name) {
    SimSystemConfig c = base;
    c.samples = samples;
    c.sigma_e = sigma_e;
    c.seed = Rng::derive(seed, 100 + stream).next_u64();
    IoDataset d = generate_sim_system(c);
    d.name = name;
    return d;
  };
  DataSplits s;
  s.train = make(kSimTrainSamples, 0, base.sigma_e, "train");
  s.val = make(kSimValSamples, 1, base.sigma_e, "val");
  s.test = make(kSimTestSamples, 2, 0.0, "test");
  return s;
}

void save_csv(const IoDataset& data, const std::filesystem::path& path) {
  validate(data);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  for (std::size_t i = 0; i < data.n_u(); ++i) out << (i ? "," : "") << 'u' << i + 1;
  for (std::size_t i = 0; i < data.n_y(); ++i) out << ",y" << i + 1;
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < data.u.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.u.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.u(r, c));
      if (c) out << ',';
      out << buf;
    }
    for (Eigen::Index c = 0; c < data.y.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data.y(r, c));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::io, "write failed for '" + path.string() + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line,
                              const std::string& what) {
  fail(ErrorKind::parse, path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

IoDataset load_csv(const std::filesystem::path& path, std::size_t n_u, std::size_t n_y) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for reading");

  std::vector<std::string> expected;
  for (std::size_t i = 0; i < n_u; ++i) expected.push_back("u" + std::to_string(i + 1));
  for (std::size_t i = 0; i < n_y; ++i) expected.push_back("y" + std::to_string(i + 1));

  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_error(path, line_no, "missing header");
  const auto header = split_fields(line);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= header.size()) parse_error(path, line_no, "missing column '" + expected[i] + "'");
    if (header[i] != expected[i]) {
      parse_error(path, line_no, "expected column '" + expected[i] + "' but found '" +
                                     std::string(header[i]) + "'");
    }
  }
  if (header.size() > expected.size()) {
    parse_error(path, line_no, "unexpected extra column '" +
                                   std::string(header[expected.size()]) + "'");
  }

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != expected.size()) {
      parse_error(path, line_no, "expected " + std::to_string(expected.size()) +
                                     " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double v = 0.0;
      const auto* first = fields[i].data();
      const auto* last = first + fields[i].size();
      if (!fields[i].empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || fields[i].empty()) {
        parse_error(path, line_no, "non-numeric value '" + std::string(fields[i]) +
                                       "' in column '" + expected[i] + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }

  IoDataset data;
  data.name = path.stem().string();
  data.u.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_u));
  data.y.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n_y));
  const std::size_t width = n_u + n_y;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n_u; ++c) {
      data.u(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * width + c];
    }
    for (std::size_t c = 0; c < n_y; ++c) {
      data.y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          values[r * width + n_u + c];
    }
  }
  validate(data);
  return data;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  fail(ErrorKind::parse, "table has no column '" + name + "'");
}

double CsvTable::number(std::size_t row, std::size_t col) const {
  require(row < rows.size() && col < header.size(), "CsvTable::number: index out of range");
  const std::string& field = rows[row][col];
  const char* first = field.data();
  const char* last = first + field.size();
  if (!field.empty() && *first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    fail(ErrorKind::parse, "row " + std::to_string(row + 1) + ", column '" + header[col] +
                               "': non-numeric value '" + field + "'");
  }
  return v;
}

CsvTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "' for reading");
  CsvTable table;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) parse_error(path, line_no, "missing header");
  for (auto f : split_fields(line)) table.header.emplace_back(f);
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      parse_error(path, line_no, "expected " + std::to_string(table.header.size()) +
                                     " fields, found " + std::to_string(fields.size()));
    }
    auto& row = table.rows.emplace_back();
    for (auto f : fields) row.emplace_back(f);
  }
  return table;
}

DataSplits slice_splits(const IoDataset& data, std::size_t train_len, std::size_t val_len,
                        std::size_t test_len) {
  const std::size_t total = train_len + val_len + test_len;
  if (total > data.size()) {
    fail(ErrorKind::contract, "split lengths " + std::to_string(total) + " exceed record length " +
                                  std::to_string(data.size()));
  }
  if (total < data.size()) {
    warn("slice_splits: dropping " + std::to_string(data.size() - total) + " trailing rows");
  }
  DataSplits s;
  s.train = slice(data, 0, train_len, "train");
  s.val = slice(data, train_len, val_len, "val");
  s.test = slice(data, train_len + val_len, test_len, "test");
  return s;
}

}  // namespace subnet
