#include "subnet/autodiff.hpp"

#include <cmath>
#include <string>

#include "subnet/error.hpp"

namespace subnet::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void graph_error(const std::string& what) {
  fail(ErrorKind::contract, "graph construction: " + what);
}

bool any_requires_grad(const std::vector<Node>& nodes, const std::vector<NodeId>& parents) {
  for (NodeId p : parents) {
    if (nodes[static_cast<std::size_t>(p)].requires_grad) return true;
  }
  return false;
}

}  // namespace

const char* to_string(OpKind op) noexcept {
  switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::affine: return "affine";
    case OpKind::tanh: return "tanh";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::square: return "square";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::gather_rows: return "gather_rows";
  }
  return "unknown";
}

void Tape::register_parameter(ParamId id, std::span<const double> flat) {
  params_[id] = flat;
}

const Node& Tape::at(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    graph_error("node id " + std::to_string(id) + " is not on the tape");
  }
  return nodes_[static_cast<std::size_t>(id)];
}

Node& Tape::at(NodeId id) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).at(id));
}

NodeId Tape::push(Node node) {
  node.requires_grad = node.op == OpKind::parameter || any_requires_grad(nodes_, node.parents);
  evaluate(node);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_unary(NodeId x) const { (void)at(x); }

void Tape::check_same_shape(NodeId a, NodeId b, const char* what) const {
  const Matrix& va = at(a).value;
  const Matrix& vb = at(b).value;
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    graph_error(std::string(what) + " shape mismatch " + shape(va) + " vs " + shape(vb));
  }
}

NodeId Tape::constant(Matrix value) {
  Node n;
  n.op = OpKind::constant;
  n.value = std::move(value);
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::parameter(ParamId id, std::size_t offset, Index rows, Index cols) {
  auto it = params_.find(id);
  if (it == params_.end()) graph_error("parameter " + std::to_string(id) + " not registered");
  if (rows < 0 || cols < 0 ||
      offset + static_cast<std::size_t>(rows * cols) > it->second.size()) {
    graph_error("parameter view out of range for buffer " + std::to_string(id));
  }
  Node n;
  n.op = OpKind::parameter;
  n.param = id;
  n.offset = offset;
  n.value.resize(rows, cols);
  return push(std::move(n));
}

NodeId Tape::affine(NodeId x, NodeId weight, std::optional<NodeId> bias) {
  const Matrix& vx = at(x).value;
  const Matrix& vw = at(weight).value;
  if (vx.cols() != vw.cols()) {
    graph_error("affine input " + shape(vx) + " incompatible with weight " + shape(vw));
  }
  Node n;
  n.op = OpKind::affine;
  n.parents = {x, weight};
  if (bias) {
    const Matrix& vb = at(*bias).value;
    if (vb.rows() != 1 || vb.cols() != vw.rows()) {
      graph_error("affine bias " + shape(vb) + " incompatible with weight " + shape(vw));
    }
    n.parents.push_back(*bias);
  }
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
  check_unary(x);
  Node n;
  n.op = OpKind::tanh;
  n.parents = {x};
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  check_unary(x);
  Node n;
  n.op = OpKind::relu;
  n.parents = {x};
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  check_unary(x);
  Node n;
  n.op = OpKind::sigmoid;
  n.parents = {x};
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = OpKind::add;
  n.parents = {a, b};
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = OpKind::sub;
  n.parents = {a, b};
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = OpKind::mul;
  n.parents = {a, b};
  return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double factor) {
  check_unary(a);
  Node n;
  n.op = OpKind::scale;
  n.parents = {a};
  n.factor = factor;
  return push(std::move(n));
}

NodeId Tape::square(NodeId a) {
  check_unary(a);
  Node n;
  n.op = OpKind::square;
  n.parents = {a};
  return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
  check_unary(a);
  Node n;
  n.op = OpKind::sum;
  n.parents = {a};
  return push(std::move(n));
}

NodeId Tape::mean(NodeId a) {
  if (at(a).value.size() == 0) graph_error("mean of an empty node");
  Node n;
  n.op = OpKind::mean;
  n.parents = {a};
  return push(std::move(n));
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  if (parts.empty()) graph_error("concat of zero parts");
  const Index rows = at(parts.front()).value.rows();
  for (NodeId p : parts) {
    if (at(p).value.rows() != rows) {
      graph_error("concat row mismatch " + shape(at(p).value) + " vs " + std::to_string(rows) +
                  " rows");
    }
  }
  Node n;
  n.op = OpKind::concat;
  n.parents.assign(parts.begin(), parts.end());
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, Index begin, Index count) {
  const Matrix& va = at(a).value;
  if (begin < 0 || count < 0 || begin + count > va.cols()) {
    graph_error("slice [" + std::to_string(begin) + ", +" + std::to_string(count) +
                ") out of range for " + shape(va));
  }
  Node n;
  n.op = OpKind::slice;
  n.parents = {a};
  n.begin = begin;
  n.value.resize(va.rows(), count);
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<Index> rows) {
  const Matrix& va = at(a).value;
  for (Index r : rows) {
    if (r < 0 || r >= va.rows()) {
      graph_error("gather row " + std::to_string(r) + " out of range for " + shape(va));
    }
  }
  Node n;
  n.op = OpKind::gather_rows;
  n.parents = {a};
  n.rows = std::move(rows);
  return push(std::move(n));
}

void Tape::evaluate(Node& n) const {
  auto parent = [&](std::size_t i) -> const Matrix& {
    return nodes_[static_cast<std::size_t>(n.parents[i])].value;
  };
  switch (n.op) {
    case OpKind::constant:
      break;
    case OpKind::parameter: {
      const auto& flat = params_.at(n.param);
      const Index rows = n.value.rows();
      const Index cols = n.value.cols();
      n.value = Eigen::Map<const RowMajor>(flat.data() + n.offset, rows, cols);
      break;
    }
    case OpKind::affine:
      n.value.noalias() = parent(0) * parent(1).transpose();
      if (n.parents.size() == 3) n.value.rowwise() += parent(2).row(0);
      break;
    case OpKind::tanh:
      n.value = fast_tanh(parent(0).array());
      break;
    case OpKind::relu:
      n.value = parent(0).array().max(0.0);
      break;
    case OpKind::sigmoid:
      n.value = 1.0 / (1.0 + (-parent(0).array()).exp());
      break;
    case OpKind::add:
      n.value = parent(0) + parent(1);
      break;
    case OpKind::sub:
      n.value = parent(0) - parent(1);
      break;
    case OpKind::mul:
      n.value = parent(0).cwiseProduct(parent(1));
      break;
    case OpKind::scale:
      n.value = n.factor * parent(0);
      break;
    case OpKind::square:
      n.value = parent(0).array().square();
      break;
    case OpKind::sum:
      n.value.resize(1, 1);
      n.value(0, 0) = parent(0).sum();
      break;
    case OpKind::mean:
      n.value.resize(1, 1);
      n.value(0, 0) = parent(0).mean();
      break;
    case OpKind::concat: {
      Index cols = 0;
      for (std::size_t i = 0; i < n.parents.size(); ++i) cols += parent(i).cols();
      n.value.resize(parent(0).rows(), cols);
      Index at_col = 0;
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        const Matrix& p = parent(i);
        n.value.middleCols(at_col, p.cols()) = p;
        at_col += p.cols();
      }
      break;
    }
    case OpKind::slice: {
      const Index count = n.value.cols();
      n.value = parent(0).middleCols(n.begin, count);
      break;
    }
    case OpKind::gather_rows: {
      const Matrix& p = parent(0);
      n.value.resize(static_cast<Index>(n.rows.size()), p.cols());
      for (std::size_t i = 0; i < n.rows.size(); ++i) {
        n.value.row(static_cast<Index>(i)) = p.row(n.rows[i]);
      }
      break;
    }
  }
}

const Matrix& Tape::forward(NodeId root) {
  (void)at(root);
  for (std::size_t i = 0; i <= static_cast<std::size_t>(root); ++i) evaluate(nodes_[i]);
  return nodes_[static_cast<std::size_t>(root)].value;
}

GradientMap Tape::backward(NodeId root) {
  const Node& r = at(root);
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    fail(ErrorKind::contract, "backward: root must be scalar, got " + shape(r.value));
  }

  const auto last = static_cast<std::size_t>(root);
  // A gradient buffer holds garbage until its first contribution assigns it;
  // skipping the zero fill saves a pass over every batch-sized node.
  std::vector<char> ready(last + 1, 0);
  for (std::size_t i = 0; i <= last; ++i) {
    if (!nodes_[i].requires_grad) nodes_[i].grad.resize(0, 0);
  }

  GradientMap grads;
  for (const auto& [id, flat] : params_) grads[id].assign(flat.size(), 0.0);
  if (!r.requires_grad) return grads;
  nodes_[last].grad.setConstant(1, 1, 1.0);
  ready[last] = 1;

  for (std::size_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !ready[i]) continue;
    const Matrix& g = n.grad;
    auto wants = [&](std::size_t k) {
      return nodes_[static_cast<std::size_t>(n.parents[k])].requires_grad;
    };
    auto pval = [&](std::size_t k) -> const Matrix& {
      return nodes_[static_cast<std::size_t>(n.parents[k])].value;
    };
    // Adds `contribution` to parent k's gradient, assigning on first use.
    auto accumulate = [&](std::size_t k, const auto& contribution) {
      const auto p = static_cast<std::size_t>(n.parents[k]);
      if (ready[p]) {
        nodes_[p].grad += contribution;
      } else {
        nodes_[p].grad = contribution;
        ready[p] = 1;
      }
    };
    auto accumulate_product = [&](std::size_t k, const auto& lhs, const auto& rhs) {
      const auto p = static_cast<std::size_t>(n.parents[k]);
      if (ready[p]) {
        nodes_[p].grad.noalias() += lhs * rhs;
      } else {
        nodes_[p].grad.noalias() = lhs * rhs;
        ready[p] = 1;
      }
    };
    // For ops that write only part of the parent's gradient.
    auto zeroed = [&](std::size_t k) -> Matrix& {
      const auto p = static_cast<std::size_t>(n.parents[k]);
      if (!ready[p]) {
        nodes_[p].grad.setZero(nodes_[p].value.rows(), nodes_[p].value.cols());
        ready[p] = 1;
      }
      return nodes_[p].grad;
    };

    switch (n.op) {
      case OpKind::constant:
        break;
      case OpKind::parameter: {
        auto& flat = grads[n.param];
        Eigen::Map<RowMajor> target(flat.data() + n.offset, g.rows(), g.cols());
        target += g;
        break;
      }
      case OpKind::affine:
        if (wants(0)) accumulate_product(0, g, pval(1));
        if (wants(1)) accumulate_product(1, g.transpose(), pval(0));
        if (n.parents.size() == 3 && wants(2)) accumulate(2, g.colwise().sum());
        break;
      case OpKind::tanh:
        if (wants(0)) accumulate(0, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case OpKind::relu:
        // Subgradient 0 at the kink.
        if (wants(0)) accumulate(0, (pval(0).array() > 0.0).select(g.array(), 0.0).matrix());
        break;
      case OpKind::sigmoid:
        if (wants(0)) {
          accumulate(0, (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        }
        break;
      case OpKind::add:
        if (wants(0)) accumulate(0, g);
        if (wants(1)) accumulate(1, g);
        break;
      case OpKind::sub:
        if (wants(0)) accumulate(0, g);
        if (wants(1)) accumulate(1, -g);
        break;
      case OpKind::mul:
        if (wants(0)) accumulate(0, g.cwiseProduct(pval(1)));
        if (wants(1)) accumulate(1, g.cwiseProduct(pval(0)));
        break;
      case OpKind::scale:
        if (wants(0)) accumulate(0, n.factor * g);
        break;
      case OpKind::square:
        if (wants(0)) accumulate(0, (2.0 * g.array() * pval(0).array()).matrix());
        break;
      case OpKind::sum:
        if (wants(0)) accumulate(0, Matrix::Constant(pval(0).rows(), pval(0).cols(), g(0, 0)));
        break;
      case OpKind::mean:
        if (wants(0)) {
          accumulate(0, Matrix::Constant(pval(0).rows(), pval(0).cols(),
                                         g(0, 0) / static_cast<double>(pval(0).size())));
        }
        break;
      case OpKind::concat: {
        Index at_col = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          const Index cols = pval(k).cols();
          if (wants(k)) accumulate(k, g.middleCols(at_col, cols));
          at_col += cols;
        }
        break;
      }
      case OpKind::slice:
        if (wants(0)) zeroed(0).middleCols(n.begin, g.cols()) += g;
        break;
      case OpKind::gather_rows:
        if (wants(0)) {
          Matrix& target = zeroed(0);
          for (std::size_t k = 0; k < n.rows.size(); ++k) {
            target.row(n.rows[k]) += g.row(static_cast<Index>(k));
          }
        }
        break;
    }
  }
  return grads;
}

std::vector<bool> Tape::relu_pattern(NodeId root) const {
  std::vector<bool> bits;
  for (std::size_t i = 0; i <= static_cast<std::size_t>(root); ++i) {
    const Node& n = nodes_[i];
    if (n.op != OpKind::relu) continue;
    const Matrix& input = nodes_[static_cast<std::size_t>(n.parents[0])].value;
    for (Index k = 0; k < input.size(); ++k) bits.push_back(input.data()[k] > 0.0);
  }
  return bits;
}

void Tape::clear() {
  nodes_.clear();
  params_.clear();
}

GradCheckReport grad_check(const std::function<NodeId(Tape&)>& build,
                           std::span<const CheckedParameter> params, double h,
                           double tol) {
  require(h > 0.0, "grad_check: step h must be positive");
  Tape tape;
  const NodeId root = build(tape);
  tape.forward(root);
  const GradientMap analytic = tape.backward(root);

  GradCheckReport report;
  std::size_t component = 0;
  for (const CheckedParameter& p : params) {
    auto it = analytic.find(p.id);
    for (std::size_t i = 0; i < p.values.size(); ++i, ++component) {
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      if (!std::isfinite(a)) {
        throw NumericError("grad_check: non-finite analytic gradient at component " +
                               std::to_string(component),
                           component);
      }
      const double saved = p.values[i];
      p.values[i] = saved + h;
      const double plus = tape.forward(root)(0, 0);
      const auto pattern_plus = tape.relu_pattern(root);
      p.values[i] = saved - h;
      const double minus = tape.forward(root)(0, 0);
      const auto pattern_minus = tape.relu_pattern(root);
      p.values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        tape.forward(root);
        throw NumericError("grad_check: non-finite function value at component " +
                               std::to_string(component),
                           component);
      }
      if (pattern_plus != pattern_minus) {
        report.non_comparable.push_back(component);
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_component = component;
      }
    }
  }
  tape.forward(root);
  report.pass = report.max_relative_error <= tol;
  return report;
}

}  // namespace subnet::ad
