// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace rvar {

struct MaeResult {
  Eigen::VectorXd per_lead;  // one entry per row of the inputs
  double overall = 0.0;
};

// pred and truth are [T x N] (or any matching shapes); rows are lead days.
MaeResult mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

// Alignment of two time series at one grid point. Nullopt when either
// vector has zero norm (similarity undefined there).
std::optional<double> cosine_similarity(const Eigen::VectorXd& pred,
                                        const Eigen::VectorXd& truth);

enum class ImprovementMode { kSimilarity, kMae };

// Positive values mean the method beats climatology in either mode.
Eigen::MatrixXd improvement_map(const Eigen::MatrixXd& method_metric,
                                const Eigen::MatrixXd& climatology_metric,
                                ImprovementMode mode);

struct Region {
  std::string name;
  int row_begin = 0, row_end = 0;  // half-open
  int col_begin = 0, col_end = 0;
};

struct RegionalRow {
  std::string region;
  int lead_day = 0;  // 1-based
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

// members: one metric field per ensemble member, each [T_lead x N].
// Band is min/max across members of the per-region mean.
std::vector<RegionalRow> regional_summary(
    const std::vector<Eigen::MatrixXd>& members,
    const std::vector<Region>& regions, int grid_h, int grid_w);

}  // namespace rvar
