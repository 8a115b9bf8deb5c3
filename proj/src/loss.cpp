#include "subnet/loss.hpp"

#include <algorithm>
#include <thread>

#include "subnet/error.hpp"
#include "subnet/rng.hpp"

namespace subnet {

using Eigen::Index;

IndexSet valid_starts(std::size_t samples, std::size_t horizon, std::size_t n_a, std::size_t n_b,
                      std::size_t spacing) {
  if (horizon < 1) fail(ErrorKind::config, "truncation length T must be >= 1");
  if (spacing < 1) fail(ErrorKind::config, "section spacing d must be >= 1");
  const std::size_t n = std::max(n_a, n_b);
  if (samples < horizon + n) {
    fail(ErrorKind::config, "no valid section starts: N=" + std::to_string(samples) +
                                " < T + n = " + std::to_string(horizon + n));
  }
  IndexSet set;
  set.horizon = horizon;
  set.spacing = spacing;
  for (std::size_t t = n; t + horizon <= samples; t += spacing) set.starts.push_back(t);
  return set;
}

TrainableStates TrainableStates::zeros(std::vector<std::size_t> starts, std::size_t n_x) {
  require(std::is_sorted(starts.begin(), starts.end()), "TrainableStates: starts must be sorted");
  TrainableStates s;
  s.values.assign(starts.size() * n_x, 0.0);
  s.starts = std::move(starts);
  s.n_x = n_x;
  return s;
}

std::size_t TrainableStates::row_of(std::size_t start) const {
  auto it = std::lower_bound(starts.begin(), starts.end(), start);
  require(it != starts.end() && *it == start,
          "no trainable initial state for section start " + std::to_string(start));
  return static_cast<std::size_t>(it - starts.begin());
}

ad::NodeId scaled_error_sum(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                            const WindowBatch& windows, const TrainableStates* states,
                            double scale) {
  ad::NodeId x0;
  if (states) {
    require(states->n_x == model.n_x, "trainable states have the wrong width");
    tape.register_parameter(kInitialStateParams, states->values);
    const ad::NodeId all = tape.parameter(kInitialStateParams, 0,
                                          static_cast<Index>(states->starts.size()),
                                          static_cast<Index>(states->n_x));
    std::vector<Index> rows;
    rows.reserve(windows.batch());
    for (std::size_t t : windows.starts) rows.push_back(static_cast<Index>(states->row_of(t)));
    x0 = tape.gather_rows(all, std::move(rows));
  } else {
    require(model.has_encoder, "batch loss: model has no encoder and no initial states were given");
    x0 = encode(tape, model, nodes, tape.constant(windows.encoder_input));
  }
  RolloutNodes r;
  try {
    r = rollout(tape, model, nodes, x0, windows, InnovationMode::teacher_forced);
  } catch (const RolloutDivergence& e) {
    const std::size_t start = windows.starts.at(e.row);
    throw NumericError("loss diverged in section starting at t=" + std::to_string(start) +
                           " (step k=" + std::to_string(*e.index()) + ")",
                       start);
  }
  const ad::NodeId residuals = tape.concat(r.innovations);
  return tape.scale(tape.sum(tape.square(residuals)), scale);
}

ad::NodeId batch_loss(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                      const WindowBatch& windows, const TrainableStates* states) {
  require(windows.batch() >= 1, "batch loss: empty batch");
  const double scale =
      1.0 / (static_cast<double>(windows.batch()) * static_cast<double>(windows.horizon()));
  return scaled_error_sum(tape, model, nodes, windows, states, scale);
}

LossGradient batch_loss_gradient(const SubnetModel& model, const IoDataset& normalized,
                                 std::span<const std::size_t> starts, std::size_t horizon,
                                 const TrainableStates* states, std::size_t threads) {
  require(!starts.empty(), "batch loss: empty batch");
  const double scale = 1.0 / (static_cast<double>(starts.size()) * static_cast<double>(horizon));
  const std::size_t chunks = std::clamp<std::size_t>(threads, 1, starts.size());

  struct Part {
    LossGradient result;
    std::exception_ptr error;
  };
  std::vector<Part> parts(chunks);
  auto run = [&](std::size_t c) {
    try {
      const std::size_t begin = starts.size() * c / chunks;
      const std::size_t end = starts.size() * (c + 1) / chunks;
      const WindowBatch w = make_windows(model, normalized, starts.subspan(begin, end - begin), horizon);
      ad::Tape tape;
      const ModelNodes nodes = bind(tape, model);
      const ad::NodeId root = scaled_error_sum(tape, model, nodes, w, states, scale);
      parts[c].result.loss = tape.value(root)(0, 0);
      parts[c].result.gradient = tape.backward(root);
    } catch (...) {
      parts[c].error = std::current_exception();
    }
  };
  if (chunks == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t c = 1; c < chunks; ++c) pool.emplace_back(run, c);
    run(0);
    for (auto& t : pool) t.join();
  }
  for (const Part& p : parts) {
    if (p.error) std::rethrow_exception(p.error);
  }
  LossGradient total = std::move(parts[0].result);
  for (std::size_t c = 1; c < chunks; ++c) {
    total.loss += parts[c].result.loss;
    for (auto& [id, g] : parts[c].result.gradient) {
      auto& acc = total.gradient[id];
      if (acc.empty()) acc.assign(g.size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  }
  return total;
}

double encoder_loss(const SubnetModel& model, const IoDataset& normalized,
                    std::span<const std::size_t> starts, std::size_t horizon) {
  require(!starts.empty(), "encoder loss: empty index set");
  std::vector<std::size_t> sorted(starts.begin(), starts.end());
  std::sort(sorted.begin(), sorted.end());
  constexpr std::size_t kChunk = 1024;
  double total = 0.0;
  for (std::size_t begin = 0; begin < sorted.size(); begin += kChunk) {
    const std::size_t len = std::min(kChunk, sorted.size() - begin);
    const WindowBatch w =
        make_windows(model, normalized, std::span(sorted).subspan(begin, len), horizon);
    const Rollout r = rollout(model, w, InnovationMode::teacher_forced);
    for (std::size_t b = 0; b < len; ++b) {
      double v = 0.0;
      for (std::size_t k = 0; k < horizon; ++k) {
        v += r.innovations[k].row(static_cast<Index>(b)).squaredNorm();
      }
      total += v / static_cast<double>(horizon);
    }
  }
  return total / static_cast<double>(sorted.size());
}

ad::NodeId full_prediction_loss(ad::Tape& tape, const SubnetModel& model,
                                const ModelNodes& nodes, const IoDataset& normalized,
                                const TrainableStates& x1) {
  require(x1.starts.size() == 1 && x1.starts.front() == 0,
          "full prediction loss: x1 must be a single state at start 0");
  WindowBatch w;
  w.starts = {0};
  const auto n = static_cast<Index>(normalized.size());
  for (Index k = 0; k < n; ++k) {
    w.u.emplace_back(normalized.u.row(k));
    w.y.emplace_back(normalized.y.row(k));
  }
  return batch_loss(tape, model, nodes, w, &x1);
}

BatchSampler::BatchSampler(IndexSet set, std::size_t batch_size, std::uint64_t seed)
    : set_(std::move(set)), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ < 1) fail(ErrorKind::config, "batch size must be >= 1");
}

std::vector<std::vector<std::size_t>> BatchSampler::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> order = set_.starts;
  Rng rng = Rng::derive(seed_, epoch_index);
  rng.shuffle(std::span(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size_) {
    const std::size_t end = std::min(order.size(), begin + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace subnet
