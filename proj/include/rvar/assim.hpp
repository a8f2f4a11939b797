// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rvar/field.hpp"
#include "rvar/lstm.hpp"
#include "rvar/pod.hpp"

namespace rvar {

// Sparse noisy samples of the true field over the forecast window.
// One location draw is shared by every time step.
struct ObservationSet {
  std::vector<int> loc_rows;
  std::vector<int> loc_cols;
  std::vector<int> times;   // forecast-window step indices, 1-based
  Eigen::MatrixXd values;   // [T_out x m]
  double noise_std = 0.0;
  int grid_h = 0;
  int grid_w = 0;

  int count() const { return static_cast<int>(loc_rows.size()); }
  // Flat grid indices (row * grid_w + col).
  std::vector<int> flat_indices() const;

  void save(const std::string& path) const;
  static ObservationSet load(const std::string& path);
};

// truth_segment is [T_out x N] rows of the true field over the window.
ObservationSet observe(const Eigen::MatrixXd& truth_segment, int grid_h,
                       int grid_w, int n_locations, double noise_std,
                       std::uint64_t seed);

struct DaConfig {
  double b0_inv_scale = 1e-2;
  double r_inv_scale = 1.0;
  bool misfit_normalization = true;  // divide data term by m * T_out
  int max_iters = 200;
  double grad_tol = 1e-6;
  double step_tol = 1e-9;
};

struct DaProblem {
  const SurrogateModel* model = nullptr;
  const PodBasis* basis = nullptr;
  Eigen::MatrixXd background;  // [T_in x k], normalized coefficients
  ObservationSet obs;
  DaConfig config;

  void validate() const;
};

double objective(const DaProblem& problem, const Eigen::MatrixXd& candidate);
Eigen::MatrixXd gradient(const DaProblem& problem,
                         const Eigen::MatrixXd& candidate);
// Single tape pass; returns J and fills grad if non-null.
double objective_and_gradient(const DaProblem& problem,
                              const Eigen::MatrixXd& candidate,
                              Eigen::MatrixXd* grad);

struct DaResult {
  Eigen::MatrixXd analysis_window;     // [T_in x k], normalized
  Eigen::MatrixXd corrected_forecast;  // [T_out x N]
  std::vector<double> objective_trace;
  bool converged = false;
  int iterations = 0;
  double wall_time = 0.0;
};

DaResult minimize(const DaProblem& problem);

struct CampaignConfig {
  int n_locations = 0;        // 0 means no observations
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  bool redraw_locations = true;  // new sensor draw per window
  DaConfig da;
};

struct CampaignWindow {
  int origin_day = 0;
  int iterations = 0;
  double j_initial = 0.0;
  double j_final = 0.0;
  double wall_time = 0.0;
  bool converged = false;
  bool failed = false;
  std::string error;
  Eigen::MatrixXd corrected;    // [T_out x N]
  Eigen::MatrixXd uncorrected;  // [T_out x N]
};

struct CampaignSummary {
  Eigen::VectorXd mae_corrected;    // per lead day
  Eigen::VectorXd mae_uncorrected;
  int windows = 0;
  int failures = 0;
};

// Daily-cadence twin campaign over a test series: for every valid
// origin, forecast from the projected truth input window, assimilate
// observations of the true output window, and hand both forecasts to
// `sink` (which may be null). Per-window failures are recorded and do
// not abort the sweep.
CampaignSummary run_campaign(
    const SurrogateModel& model, const PodBasis& basis,
    const FieldSeries& test_series, const CampaignConfig& cfg,
    const std::function<void(const CampaignWindow&)>& sink = nullptr);

}  // namespace rvar
