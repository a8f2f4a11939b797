// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>

#include "rvar/field.hpp"

namespace rvar {

// Per-mode z-score statistics for scaling reduced coefficients before
// they reach the network. Degenerate (constant) channels get sd = 1.
struct NormStats {
  Eigen::VectorXd mu;
  Eigen::VectorXd sd;

  // Rows are time steps, columns are modes.
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& coeffs) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& coeffs) const;
  Eigen::VectorXd normalize_one(const Eigen::VectorXd& c) const;
  Eigen::VectorXd denormalize_one(const Eigen::VectorXd& c) const;

  static NormStats fit(const Eigen::MatrixXd& coeffs);
  NormStats head(int k) const;  // first k modes
};

// Truncated orthonormal basis extracted from mean-centered snapshots.
// All singular values are kept even when k < M so the truncation-error
// identity stays checkable without recomputation.
struct PodBasis {
  Eigen::MatrixXd modes;            // [N x k], orthonormal columns
  Eigen::VectorXd singular_values;  // length M, non-increasing
  Eigen::VectorXd temporal_mean;    // length N
  int n_snapshots = 0;
  int k = 0;

  int points() const { return static_cast<int>(modes.rows()); }

  // Restriction to the leading modes (modes nest, so no recomputation).
  PodBasis head(int k_new) const;

  void save(const std::string& path, const NormStats* norm = nullptr) const;
  static PodBasis load(const std::string& path, NormStats* norm = nullptr);
};

PodBasis compute_pod(const FieldSeries& series, int k);

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& state);
Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& r);

// Whole series at once; rows are time steps.
Eigen::MatrixXd project_series(const PodBasis& basis, const FieldSeries& s);
Eigen::MatrixXd reconstruct_series(const PodBasis& basis,
                                   const Eigen::MatrixXd& coeffs);

// Residual of the training snapshots under the rank-k projector,
// computed directly (not from the singular values). k_used may be 0
// to request the full residual; defaults to the basis's own k.
double truncation_error(const PodBasis& basis, const FieldSeries& series,
                        int k_used = -1);

}  // namespace rvar
