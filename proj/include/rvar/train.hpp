// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rvar/lstm.hpp"

namespace rvar {

struct TrainConfig {
  double lr0 = 1e-3;
  double lr_decay = 0.5;
  int lr_patience = 10;  // epochs without val improvement before decay
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 64;
  int max_epochs = 500;
  int early_stop_patience = 20;
  std::uint64_t seed = 0;
  double split_fraction = 0.7;  // train share
  bool block_split = false;     // contiguous split instead of random origins
  double clip_norm = 5.0;       // <= 0 disables clipping
};

// Sliding windows over a normalized coefficient series. Samples are
// (input [T_in x k], target [T_out x k]) slices at each origin.
struct WindowDataset {
  Eigen::MatrixXd series;  // [T x k], normalized
  int t_in = 0;
  int t_out = 0;
  std::vector<int> origins;

  int count() const { return static_cast<int>(origins.size()); }
  Eigen::MatrixXd input(int sample) const;
  Eigen::MatrixXd target(int sample) const;
};

WindowDataset make_windows(const Eigen::MatrixXd& coeff_series, int t_in,
                           int t_out);

double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

// Standard bias-corrected Adam over a list of flat parameter vectors.
class Adam {
 public:
  Adam(const std::vector<long>& sizes, double beta1, double beta2, double eps);
  // t is the 1-based step count.
  void step(std::vector<Eigen::Map<Eigen::VectorXd>>& params,
            const std::vector<Eigen::VectorXd>& grads, int t, double lr);

 private:
  std::vector<Eigen::VectorXd> m_, v_;
  double beta1_, beta2_, eps_;
};

struct EpochRecord {
  int epoch;
  double train_mse;
  double val_mse;
  double lr;
};

struct TrainResult {
  SurrogateModel model;  // checkpoint with the lowest validation loss
  std::vector<EpochRecord> history;
  double best_val_mse = 0.0;
};

TrainResult train(const SurrogateModel& init, const WindowDataset& dataset,
                  const TrainConfig& cfg);

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history);

struct GridResult {
  int t_in;
  int k;
  std::uint64_t seed;
  double best_val_mse;
  bool failed = false;
  std::string error;
  SurrogateModel model;
};

// Sequential sweep over (T_in, k). raw_coeffs holds unnormalized
// coefficients for the largest k under test; smaller k values use its
// leading columns (POD modes nest). Results sorted by validation loss;
// per-cell failures are recorded, not fatal.
std::vector<GridResult> grid_search(const Eigen::MatrixXd& raw_coeffs,
                                    const std::vector<int>& t_in_grid,
                                    const std::vector<int>& k_grid, int t_out,
                                    int units, const TrainConfig& cfg);

void write_grid_csv(const std::string& path,
                    const std::vector<GridResult>& results,
                    const std::vector<std::string>& checkpoint_paths);

}  // namespace rvar
