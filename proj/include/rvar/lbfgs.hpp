// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace rvar {

struct LbfgsOptions {
  int memory = 10;
  int max_iters = 200;
  double grad_tol = 1e-6;   // stop when ||g||_inf below this
  double step_tol = 1e-9;   // stop when accepted step norm below this
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double fx = 0.0;
  std::vector<double> trace;  // f at x0 and after each accepted step
  bool converged = false;
  int iterations = 0;
};

// Limited-memory BFGS with Armijo backtracking. `fg` evaluates f and
// writes the gradient. Line-search failure returns the best iterate
// with converged = false; the result never has f above f(x0).
LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
    const Eigen::VectorXd& x0, const LbfgsOptions& opts = {});

}  // namespace rvar
