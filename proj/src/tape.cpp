// SPDX-License-Identifier: Apache-2.0
#include "rvar/tape.hpp"

#include "rvar/errors.hpp"

namespace rvar::ad {

namespace {

bool broadcastable(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && (a.cols() == b.cols() || b.cols() == 1);
}

// Expand a one-column operand across the columns of the other.
Eigen::MatrixXd spread(const Eigen::MatrixXd& b, long cols) {
  if (b.cols() == cols) return b;
  return b.replicate(1, cols);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw data_error("tape: invalid var");
}

Var Tape::leaf(const Eigen::MatrixXd& value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = value;
  return {push(std::move(n))};
}

Var Tape::constant(const Eigen::MatrixXd& value) {
  Node n;
  n.op = Op::kConst;
  n.value = value;
  return {push(std::move(n))};
}

Var Tape::constant(double value) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = value;
  return constant(m);
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (!broadcastable(va, vb)) throw data_error("tape: add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = va + spread(vb, va.cols());
  return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (!broadcastable(va, vb)) throw data_error("tape: sub shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = va - spread(vb, va.cols());
  return {push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (!broadcastable(va, vb)) throw data_error("tape: mul shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.a = a.id;
  n.b = b.id;
  n.value = va.cwiseProduct(spread(vb, va.cols()));
  return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (va.cols() != vb.rows()) throw data_error("tape: matmul shape mismatch");
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = va * vb;
  return {push(std::move(n))};
}

Var Tape::sigmoid(Var a) {
  check(a);
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.value = (1.0 / (1.0 + (-nodes_[a.id].value.array()).exp())).matrix();
  return {push(std::move(n))};
}

Var Tape::tanh(Var a) {
  check(a);
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.value = nodes_[a.id].value.array().tanh().matrix();
  return {push(std::move(n))};
}

Var Tape::relu(Var a) {
  check(a);
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.value = nodes_[a.id].value.cwiseMax(0.0);
  return {push(std::move(n))};
}

Var Tape::concat_rows(Var a, Var b) {
  check(a);
  check(b);
  const auto& va = nodes_[a.id].value;
  const auto& vb = nodes_[b.id].value;
  if (va.cols() != vb.cols()) throw data_error("tape: concat column mismatch");
  Node n;
  n.op = Op::kConcatRows;
  n.a = a.id;
  n.b = b.id;
  n.arg0 = static_cast<int>(va.rows());
  n.value.resize(va.rows() + vb.rows(), va.cols());
  n.value.topRows(va.rows()) = va;
  n.value.bottomRows(vb.rows()) = vb;
  return {push(std::move(n))};
}

Var Tape::slice_rows(Var a, int begin, int len) {
  check(a);
  const auto& va = nodes_[a.id].value;
  if (begin < 0 || len <= 0 || begin + len > va.rows())
    throw data_error("tape: slice out of range");
  Node n;
  n.op = Op::kSliceRows;
  n.a = a.id;
  n.arg0 = begin;
  n.arg1 = len;
  n.value = va.middleRows(begin, len);
  return {push(std::move(n))};
}

Var Tape::sum_sq(Var a) {
  check(a);
  Node n;
  n.op = Op::kSumSq;
  n.a = a.id;
  n.value.resize(1, 1);
  n.value(0, 0) = nodes_[a.id].value.squaredNorm();
  return {push(std::move(n))};
}

Var Tape::scale(Var a, double s) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.scalar = s;
  n.value = s * nodes_[a.id].value;
  return {push(std::move(n))};
}

const Eigen::MatrixXd& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

const Eigen::MatrixXd& Tape::grad(Var v) const {
  check(v);
  return nodes_[v.id].adjoint;
}

void Tape::accumulate(int id, const Eigen::MatrixXd& g) {
  auto& node = nodes_[id];
  // A one-column operand broadcast over columns collects the column sum.
  if (node.value.cols() == 1 && g.cols() > 1) {
    node.adjoint += g.rowwise().sum();
  } else {
    node.adjoint += g;
  }
}

void Tape::backward(Var output) {
  check(output);
  if (nodes_[output.id].value.size() != 1)
    throw data_error("tape: backward seed must be scalar");
  for (auto& n : nodes_)
    n.adjoint = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  nodes_[output.id].adjoint(0, 0) = 1.0;

  for (int i = output.id; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (n.adjoint.isZero(0.0)) continue;
    const Eigen::MatrixXd& g = n.adjoint;
    switch (n.op) {
      case Op::kLeaf:
      case Op::kConst:
        break;
      case Op::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::kSub:
        accumulate(n.a, g);
        accumulate(n.b, -g);
        break;
      case Op::kMul: {
        const auto& va = nodes_[n.a].value;
        const auto& vb = nodes_[n.b].value;
        accumulate(n.a, g.cwiseProduct(spread(vb, va.cols())));
        accumulate(n.b, g.cwiseProduct(va));
        break;
      }
      case Op::kMatMul:
        accumulate(n.a, g * nodes_[n.b].value.transpose());
        accumulate(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::kSigmoid:
        accumulate(n.a, g.cwiseProduct(
                            (n.value.array() * (1.0 - n.value.array())).matrix()));
        break;
      case Op::kTanh:
        accumulate(n.a,
                   g.cwiseProduct((1.0 - n.value.array().square()).matrix()));
        break;
      case Op::kRelu:
        accumulate(
            n.a,
            g.cwiseProduct((nodes_[n.a].value.array() > 0.0).cast<double>().matrix()));
        break;
      case Op::kConcatRows:
        accumulate(n.a, g.topRows(n.arg0));
        accumulate(n.b, g.bottomRows(g.rows() - n.arg0));
        break;
      case Op::kSliceRows: {
        Eigen::MatrixXd ga = Eigen::MatrixXd::Zero(nodes_[n.a].value.rows(),
                                                   nodes_[n.a].value.cols());
        ga.middleRows(n.arg0, n.arg1) = g;
        accumulate(n.a, ga);
        break;
      }
      case Op::kSumSq:
        accumulate(n.a, 2.0 * g(0, 0) * nodes_[n.a].value);
        break;
      case Op::kScale:
        accumulate(n.a, n.scalar * g);
        break;
    }
  }
}

}  // namespace rvar::ad
