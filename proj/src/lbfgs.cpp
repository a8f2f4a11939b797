// SPDX-License-Identifier: Apache-2.0
#include "rvar/lbfgs.hpp"

#include <cmath>
#include <deque>

#include "rvar/errors.hpp"

namespace rvar {

LbfgsResult lbfgs_minimize(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fg,
    const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
  LbfgsResult res;
  Eigen::VectorXd x = x0;
  Eigen::VectorXd g(x.size());
  double fx = fg(x, g);
  if (!std::isfinite(fx))
    throw numerical_error("lbfgs: non-finite objective at start");
  res.trace.push_back(fx);

  struct Pair {
    Eigen::VectorXd s, y;
    double rho;
  };
  std::deque<Pair> mem;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(mem.size());
    for (int i = static_cast<int>(mem.size()) - 1; i >= 0; --i) {
      alpha[i] = mem[i].rho * mem[i].s.dot(q);
      q -= alpha[i] * mem[i].y;
    }
    if (!mem.empty()) {
      const auto& last = mem.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t i = 0; i < mem.size(); ++i) {
      double beta = mem[i].rho * mem[i].y.dot(q);
      q += (alpha[i] - beta) * mem[i].s;
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (slope >= 0.0) {  // not a descent direction; fall back
      dir = -g;
      slope = g.dot(dir);
      mem.clear();
    }

    double step = 1.0;
    double f_new = fx;
    Eigen::VectorXd x_new, g_new(x.size());
    bool accepted = false;
    for (int ls = 0; ls < opts.max_line_search; ++ls) {
      x_new = x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= fx + opts.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= opts.backtrack;
    }
    if (!accepted) break;  // best iterate so far stays in (x, fx)

    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * y.squaredNorm()) {
      mem.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
    }
    double step_norm = s.norm();
    x = std::move(x_new);
    g = std::move(g_new);
    fx = f_new;
    res.trace.push_back(fx);
    res.iterations = iter + 1;
    if (step_norm < opts.step_tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.fx = fx;
  return res;
}

}  // namespace rvar
