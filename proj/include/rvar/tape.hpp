// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace rvar::ad {

class Tape;

// Handle into a tape. Values are matrices; column vectors and 1x1
// scalars are just narrow matrices.
struct Var {
  int id = -1;
};

enum class Op : std::uint8_t {
  kLeaf,      // differentiable input
  kConst,     // non-differentiable input
  kAdd,       // a + b, b may broadcast over columns
  kSub,       // a - b, b may broadcast over columns
  kMul,       // elementwise, b may broadcast over columns
  kMatMul,    // a * b
  kSigmoid,
  kTanh,
  kRelu,
  kConcatRows,
  kSliceRows,
  kSumSq,     // sum of squared entries -> 1x1
  kScale,     // s * a
};

// Append-only reverse-mode tape. Build the forward graph, call
// backward() on a scalar node, then read gradients of the leaves.
class Tape {
 public:
  Var leaf(const Eigen::MatrixXd& value);
  Var constant(const Eigen::MatrixXd& value);
  Var constant(double value);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var matmul(Var a, Var b);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var a, int begin, int len);
  Var sum_sq(Var a);
  Var scale(Var a, double s);

  const Eigen::MatrixXd& value(Var v) const;
  // Valid after backward(); zero matrix for nodes the seed does not reach.
  const Eigen::MatrixXd& grad(Var v) const;

  // Seeds d(output)/d(output) = 1 and accumulates adjoints in reverse
  // topological order. `output` must be 1x1.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    int arg0 = 0;  // slice begin
    int arg1 = 0;  // slice length
    double scalar = 1.0;
    Eigen::MatrixXd value;
    Eigen::MatrixXd adjoint;
  };

  int push(Node n);
  void check(Var v) const;
  void accumulate(int id, const Eigen::MatrixXd& g);

  std::vector<Node> nodes_;
};

}  // namespace rvar::ad
