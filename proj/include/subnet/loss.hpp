#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "subnet/autodiff.hpp"
#include "subnet/data.hpp"
#include "subnet/model.hpp"

namespace subnet {

// Section start indices, 0-based: t = n + d*k with n = max(n_a, n_b) and
// t + T <= N. (In 1-based terms the starts run over n+1 .. N-T+1.)
struct IndexSet {
  std::vector<std::size_t> starts;
  std::size_t horizon = 0;
  std::size_t spacing = 1;
};

// Count is ceil((N - T - n + 1) / d). Throws config error when empty.
IndexSet valid_starts(std::size_t samples, std::size_t horizon, std::size_t n_a, std::size_t n_b,
                      std::size_t spacing = 1);

// One initial state per section start, used instead of the encoder by the
// multiple-shooting baselines.
struct TrainableStates {
  std::vector<std::size_t> starts;  // ascending
  std::vector<double> values;       // starts.size() x n_x, row-major
  std::size_t n_x = 0;

  static TrainableStates zeros(std::vector<std::size_t> starts, std::size_t n_x);
  std::size_t row_of(std::size_t start) const;
};

// Mean over the batch of v_t = (1/T) sum_k |y_{t+k} - y_hat_{t|t+k}|^2 with
// teacher-forced innovations. Initial states come from the encoder, or from
// `states` when given (registered as kInitialStateParams).
ad::NodeId batch_loss(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                      const WindowBatch& windows, const TrainableStates* states = nullptr);

// Sum over the batch of T * v_t scaled by `scale`; building block for
// batch_loss and for chunked (multi-tape) evaluation.
ad::NodeId scaled_error_sum(ad::Tape& tape, const SubnetModel& model, const ModelNodes& nodes,
                            const WindowBatch& windows, const TrainableStates* states,
                            double scale);

struct LossGradient {
  double loss = 0.0;
  ad::GradientMap gradient;
};

// batch_loss and its gradient for windows cut from `normalized`. The batch is
// split into `threads` contiguous chunks evaluated on separate tapes; chunk
// results are reduced in chunk order, so a fixed thread count gives
// bit-reproducible results.
LossGradient batch_loss_gradient(const SubnetModel& model, const IoDataset& normalized,
                                 std::span<const std::size_t> starts, std::size_t horizon,
                                 const TrainableStates* states = nullptr,
                                 std::size_t threads = 1);

// Value of the encoder loss over `starts` (mean of v_t), without a tape.
// Per-section terms are reduced in ascending start order.
double encoder_loss(const SubnetModel& model, const IoDataset& normalized,
                    std::span<const std::size_t> starts, std::size_t horizon);

// Full-record prediction loss (1/N) sum_k |y_k - y_hat_k|^2 from the trainable
// initial state `x1` (a single-row TrainableStates at start 0).
ad::NodeId full_prediction_loss(ad::Tape& tape, const SubnetModel& model,
                                const ModelNodes& nodes, const IoDataset& normalized,
                                const TrainableStates& x1);

// Seeded epoch-wise permutation of an index set cut into batches of at most
// `batch_size` starts (the last may be short).
class BatchSampler {
 public:
  BatchSampler(IndexSet set, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::vector<std::size_t>> epoch(std::size_t epoch_index) const;
  const IndexSet& index_set() const { return set_; }

 private:
  IndexSet set_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace subnet
