// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rvar/pod.hpp"
#include "rvar/tape.hpp"

namespace rvar {

// Packed LSTM cell weights. Gate rows are ordered i, f, g, o; the
// input to the matrix is [x; h].
struct LstmCellParams {
  Eigen::MatrixXd w_gates;  // [4u x (d_in + u)]
  Eigen::VectorXd b_gates;  // [4u]
  int units = 0;
  int input_size = 0;
};

// Hidden/cell pair for one stacked layer. Columns are batch entries.
struct LatentState {
  Eigen::MatrixXd h;
  Eigen::MatrixXd c;

  static LatentState zero(int units, int batch = 1);
};

// Encoder-decoder LSTM over normalized POD coefficients: the encoder
// consumes the input window, its final hidden vector is replicated as
// the decoder input at every output step, and a ReLU dense + linear
// dense head maps decoder hiddens to coefficients.
struct SurrogateModel {
  std::vector<LstmCellParams> encoder;  // stacked, layer 0 first
  std::vector<LstmCellParams> decoder;
  Eigen::MatrixXd out_w1;  // [u x u], ReLU
  Eigen::VectorXd out_b1;
  Eigen::MatrixXd out_w2;  // [k x u], linear
  Eigen::VectorXd out_b2;
  int t_in = 14;
  int t_out = 20;
  int k = 5;
  int units = 20;
  NormStats norm;

  // Glorot-uniform weights, zero biases, forget-gate bias offset +1
  // (set forget_bias_offset = 0 to disable).
  static SurrogateModel init(int k, int units, int t_in, int t_out,
                             std::uint64_t seed, int layers = 2,
                             double forget_bias_offset = 1.0);

  // Flat views over every trainable array, in a fixed order.
  std::vector<Eigen::Map<Eigen::VectorXd>> param_views();
  std::vector<std::string> param_names() const;

  void save(const std::string& path) const;
  static SurrogateModel load(const std::string& path);
};

struct Forecast {
  Eigen::MatrixXd reduced;  // [T_out x k], denormalized coefficients
  Eigen::MatrixXd full;     // [T_out x N]
};

// Plain (tape-free) forward path. Batched: columns of x are samples.
LatentState cell_step(const LstmCellParams& params, const Eigen::MatrixXd& x,
                      const LatentState& state);

// window is [T_in x k] normalized coefficients (single sample).
std::vector<LatentState> encode(const SurrogateModel& model,
                                const Eigen::MatrixXd& window);
// Returns [T_out x k] normalized coefficients.
Eigen::MatrixXd decode(const SurrogateModel& model,
                       const Eigen::MatrixXd& latent_h, int t_out);

// raw_window is [T_in x k] unnormalized coefficients.
Forecast forecast(const SurrogateModel& model, const PodBasis& basis,
                  const Eigen::MatrixXd& raw_window);
Forecast forecast_full(const SurrogateModel& model, const PodBasis& basis,
                       const Eigen::MatrixXd& full_window);

// --- tape-staged path (training and assimilation) ---

struct StagedCell {
  ad::Var w, b;
};

struct StagedModel {
  std::vector<StagedCell> encoder, decoder;
  ad::Var out_w1, out_b1, out_w2, out_b2;
};

// as_leaves = true marks parameters differentiable (training).
StagedModel stage_model(ad::Tape& tape, const SurrogateModel& model,
                        bool as_leaves);

// inputs: T_in vars of [k x B]; returns T_out vars of [k x B]
// (normalized coefficient scale).
std::vector<ad::Var> staged_forward(ad::Tape& tape, const StagedModel& staged,
                                    const SurrogateModel& model,
                                    const std::vector<ad::Var>& inputs,
                                    int t_out);

// Gradient of a scalar objective (built from the forecast steps) with
// respect to the normalized input window. The callback receives the
// tape, the input leaves, and the T_out output vars, and must return a
// 1x1 var.
Eigen::MatrixXd grad_wrt_input(
    const SurrogateModel& model, const Eigen::MatrixXd& window_norm,
    const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&,
                                const std::vector<ad::Var>&)>& objective,
    double* objective_value = nullptr);

}  // namespace rvar
