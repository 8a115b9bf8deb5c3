#pragma once

// Reverse-mode automatic differentiation over matrix-valued nodes.
//
// Every node holds a (rows x cols) matrix; by convention rows index the batch
// and columns index features. Values are computed eagerly when a node is
// appended (define-by-run), and `forward` can re-evaluate the whole tape from
// the current contents of the registered parameter buffers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace subnet::ad {

// tanh through the vectorized exp; libm tanh is not vectorized and dominated
// training time. Absolute error stays within a few ulp of 1; saturates to +-1.
template <typename Derived>
Eigen::ArrayXXd fast_tanh(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using NodeId = std::int32_t;
using ParamId = std::int32_t;

enum class OpKind {
  constant,
  parameter,
  affine,
  tanh,
  relu,
  sigmoid,
  add,
  sub,
  mul,
  scale,
  square,
  sum,
  mean,
  concat,
  slice,
  gather_rows,
};

const char* to_string(OpKind op) noexcept;

struct Node {
  OpKind op = OpKind::constant;
  std::vector<NodeId> parents;
  Matrix value;
  Matrix grad;  // meaningful only for nodes backward() reached from the root
  bool requires_grad = false;

  // Op attributes; only the ones relevant to `op` are meaningful.
  ParamId param = -1;
  std::size_t offset = 0;
  Index begin = 0;
  double factor = 1.0;
  std::vector<Index> rows;
};

// Flat gradient per registered parameter buffer. Buffers that did not
// influence the root get an all-zero entry.
using GradientMap = std::map<ParamId, std::vector<double>>;

class Tape {
 public:
  // Parameter buffers are referenced, not copied; they must outlive the tape.
  void register_parameter(ParamId id, std::span<const double> flat);
  bool has_parameter(ParamId id) const { return params_.contains(id); }

  NodeId constant(Matrix value);
  // Row-major (rows x cols) view into the flat buffer `id` starting at `offset`.
  NodeId parameter(ParamId id, std::size_t offset, Index rows, Index cols);

  // x * W^T + b, with x (batch x in), W (out x in), b (1 x out).
  NodeId affine(NodeId x, NodeId weight, std::optional<NodeId> bias = {});
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId square(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  // Column-wise concatenation; all parts share the row count.
  NodeId concat(std::span<const NodeId> parts);
  NodeId slice(NodeId a, Index begin, Index count);
  NodeId gather_rows(NodeId a, std::vector<Index> rows);

  const Matrix& value(NodeId id) const { return at(id).value; }
  const Node& node(NodeId id) const { return at(id); }
  std::size_t size() const { return nodes_.size(); }

  // Re-evaluates nodes 0..root from the current parameter buffers.
  const Matrix& forward(NodeId root);
  GradientMap backward(NodeId root);

  // One bit per relu input element (positive or not), in tape order up to
  // `root`. Used to detect kinks crossed by finite-difference probes.
  std::vector<bool> relu_pattern(NodeId root) const;

  void clear();

 private:
  const Node& at(NodeId id) const;
  Node& at(NodeId id);
  NodeId push(Node node);
  void evaluate(Node& node) const;
  void check_unary(NodeId x) const;
  void check_same_shape(NodeId a, NodeId b, const char* what) const;

  std::vector<Node> nodes_;
  std::map<ParamId, std::span<const double>> params_;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_component = 0;
  std::vector<std::size_t> non_comparable;
  bool pass = true;
};

// A parameter buffer that grad_check may perturb in place.
struct CheckedParameter {
  ParamId id;
  std::span<double> values;
};

// Compares backward() against central differences of step `h` for every
// component of every listed buffer. `build` must register the buffers it uses
// and return a scalar root. Components whose +h/-h probes land on different
// sides of a relu kink are reported as non-comparable and skipped.
// Relative error is |a - b| / max(1, |a|, |b|).
GradCheckReport grad_check(const std::function<NodeId(Tape&)>& build,
                           std::span<const CheckedParameter> params, double h,
                           double tol);

}  // namespace subnet::ad
