// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace rvar {

// Time-ordered sequence of 2-D snapshots. Each row of `data` is one
// snapshot flattened row major (grid_h x grid_w).
struct FieldSeries {
  Eigen::MatrixXd data;  // [T x N], N = grid_h * grid_w
  std::vector<std::int64_t> day_index;
  int grid_h = 0;
  int grid_w = 0;

  int steps() const { return static_cast<int>(data.rows()); }
  int points() const { return static_cast<int>(data.cols()); }

  // Throws data_error on shape inconsistency, non-finite values, or a
  // day index that is not strictly increasing with unit stride.
  void validate() const;

  // Contiguous sub-series of [begin, begin+len) snapshots.
  FieldSeries slice(int begin, int len) const;

  void save(const std::string& path) const;
  static FieldSeries load(const std::string& path);
};

}  // namespace rvar
