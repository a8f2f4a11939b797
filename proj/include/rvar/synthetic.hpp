// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "rvar/field.hpp"

namespace rvar {

struct WaveComponent {
  double amplitude = 1.0;
  int wavenumber = 1;          // zonal wavenumber over the grid width
  double envelope_width = 8.0;  // Gaussian meridional envelope, in cells
  double speed = 1.0;           // eastward phase speed, cells per day
};

// Traveling-wave stand-in for a daily geopotential-height archive:
// base level + 365-day seasonal cycle + eastward waves under Gaussian
// meridional envelopes + optional white noise.
struct SyntheticConfig {
  int grid_h = 40;
  int grid_w = 48;
  int n_days = 2920;  // 8 synthetic years of 365 days
  double base_level = 50.0;
  double seasonal_amplitude = 10.0;
  double seasonal_period = 365.0;
  // Speeds are slow enough that day-over-day persistence stays
  // competitive at short leads, as it should for this kind of field.
  std::vector<WaveComponent> waves = {
      {8.0, 2, 10.0, 0.5},
      {5.0, 3, 8.0, 0.75},
      {3.0, 5, 6.0, 1.0},
  };
  double noise_std = 0.25;
  std::uint64_t seed = 1;

  void validate(int min_days = 0) const;
};

FieldSeries generate(const SyntheticConfig& cfg);

// Contiguous year blocks: [train][gap][test]. The gap must be at least
// min_gap_days so no test input window overlaps training data.
std::pair<FieldSeries, FieldSeries> split_years(const FieldSeries& series,
                                                int train_years, int gap_years,
                                                int test_years,
                                                int min_gap_days = 42,
                                                int days_per_year = 365);

// Pointwise mean over all training years of the given calendar day.
Eigen::VectorXd climatology(const FieldSeries& train, int day_of_year,
                            int days_per_year = 365);

// Last input day repeated for every forecast day.
Eigen::MatrixXd persistence(const Eigen::MatrixXd& input_window, int t_out);

}  // namespace rvar
