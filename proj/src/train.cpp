// SPDX-License-Identifier: Apache-2.0
#include "rvar/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "rvar/errors.hpp"

namespace rvar {

Eigen::MatrixXd WindowDataset::input(int sample) const {
  return series.middleRows(origins.at(sample), t_in);
}

Eigen::MatrixXd WindowDataset::target(int sample) const {
  return series.middleRows(origins.at(sample) + t_in, t_out);
}

WindowDataset make_windows(const Eigen::MatrixXd& coeff_series, int t_in,
                           int t_out) {
  if (t_in < 1 || t_out < 1) throw data_error("train: window lengths must be >= 1");
  const int len = static_cast<int>(coeff_series.rows());
  if (len < t_in + t_out)
    throw data_error("train: series shorter than T_in + T_out");
  WindowDataset ds;
  ds.series = coeff_series;
  ds.t_in = t_in;
  ds.t_out = t_out;
  const int count = len - t_in - t_out + 1;
  ds.origins.resize(count);
  std::iota(ds.origins.begin(), ds.origins.end(), 0);
  return ds;
}

double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw data_error("train: mse shape mismatch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

Adam::Adam(const std::vector<long>& sizes, double beta1, double beta2,
           double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (long s : sizes) {
    m_.push_back(Eigen::VectorXd::Zero(s));
    v_.push_back(Eigen::VectorXd::Zero(s));
  }
}

void Adam::step(std::vector<Eigen::Map<Eigen::VectorXd>>& params,
                const std::vector<Eigen::VectorXd>& grads, int t, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw data_error("train: adam parameter count mismatch");
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -=
        lr * (m_[i].array() / bc1) /
        ((v_[i].array() / bc2).sqrt() + eps_);
  }
}

namespace {

// Batched tape-free forward used for validation loss.
std::vector<Eigen::MatrixXd> plain_batched_forward(
    const SurrogateModel& model, const std::vector<Eigen::MatrixXd>& inputs) {
  const int u = model.units;
  const int batch = static_cast<int>(inputs[0].cols());
  std::vector<LatentState> enc(model.encoder.size(),
                               LatentState::zero(u, batch));
  for (int t = 0; t < model.t_in; ++t) {
    Eigen::MatrixXd x = inputs[t];
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
      enc[l] = cell_step(model.encoder[l], x, enc[l]);
      x = enc[l].h;
    }
  }
  Eigen::MatrixXd latent = enc.back().h;
  std::vector<LatentState> dec(model.decoder.size(),
                               LatentState::zero(u, batch));
  std::vector<Eigen::MatrixXd> outputs;
  for (int t = 0; t < model.t_out; ++t) {
    Eigen::MatrixXd x = latent;
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
      dec[l] = cell_step(model.decoder[l], x, dec[l]);
      x = dec[l].h;
    }
    Eigen::MatrixXd hidden =
        ((model.out_w1 * x).colwise() + model.out_b1).cwiseMax(0.0);
    outputs.push_back((model.out_w2 * hidden).colwise() + model.out_b2);
  }
  return outputs;
}

// inputs[t] is [k x B]; one column per sample in `ids`.
std::vector<Eigen::MatrixXd> gather_steps(const WindowDataset& ds,
                                          const std::vector<int>& ids,
                                          bool targets) {
  const int steps = targets ? ds.t_out : ds.t_in;
  const int offset = targets ? ds.t_in : 0;
  const int k = static_cast<int>(ds.series.cols());
  std::vector<Eigen::MatrixXd> out(steps,
                                   Eigen::MatrixXd(k, static_cast<int>(ids.size())));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    const int origin = ds.origins.at(ids[j]);
    for (int t = 0; t < steps; ++t)
      out[t].col(static_cast<long>(j)) =
          ds.series.row(origin + offset + t).transpose();
  }
  return out;
}

double eval_mse(const SurrogateModel& model, const WindowDataset& ds,
                const std::vector<int>& ids) {
  if (ids.empty()) return 0.0;
  auto inputs = gather_steps(ds, ids, false);
  auto targets = gather_steps(ds, ids, true);
  auto outputs = plain_batched_forward(model, inputs);
  double sum = 0.0;
  for (int t = 0; t < ds.t_out; ++t)
    sum += (outputs[t] - targets[t]).squaredNorm();
  return sum / (static_cast<double>(ds.t_out) * ds.series.cols() * ids.size());
}

}  // namespace

TrainResult train(const SurrogateModel& init, const WindowDataset& dataset,
                  const TrainConfig& cfg) {
  if (cfg.split_fraction <= 0.0 || cfg.split_fraction >= 1.0)
    throw config_error("train: split_fraction must be in (0, 1)");
  if (cfg.lr0 <= 0.0 || cfg.lr_patience < 1 || cfg.early_stop_patience < 1)
    throw config_error("train: bad optimizer settings");
  const int n = dataset.count();
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  if (!cfg.block_split) std::shuffle(all.begin(), all.end(), rng);
  const int n_train = static_cast<int>(std::floor(cfg.split_fraction * n));
  std::vector<int> train_ids(all.begin(), all.begin() + n_train);
  std::vector<int> val_ids(all.begin() + n_train, all.end());
  if (train_ids.empty() || val_ids.empty())
    throw data_error("train: empty split");

  SurrogateModel model = init;
  auto views = model.param_views();
  std::vector<long> sizes;
  for (auto& v : views) sizes.push_back(v.size());
  Adam adam(sizes, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

  TrainResult result;
  result.model = model;
  double best_val = std::numeric_limits<double>::infinity();
  double lr = cfg.lr0;
  int lr_bad_epochs = 0;
  int stop_bad_epochs = 0;
  int adam_t = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train_ids.begin(), train_ids.end(), rng);
    double train_loss_sum = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n_train - start);
      std::vector<int> batch(train_ids.begin() + start,
                             train_ids.begin() + start + bs);
      auto in_steps = gather_steps(dataset, batch, false);
      auto tg_steps = gather_steps(dataset, batch, true);

      ad::Tape tape;
      StagedModel staged = stage_model(tape, model, true);
      std::vector<ad::Var> inputs;
      for (auto& m : in_steps) inputs.push_back(tape.constant(m));
      auto outputs = staged_forward(tape, staged, model, inputs, dataset.t_out);
      ad::Var loss{-1};
      for (int t = 0; t < dataset.t_out; ++t) {
        ad::Var term = tape.sum_sq(tape.sub(outputs[t], tape.constant(tg_steps[t])));
        loss = t == 0 ? term : tape.add(loss, term);
      }
      const double denom =
          static_cast<double>(dataset.t_out) * dataset.series.cols() * bs;
      loss = tape.scale(loss, 1.0 / denom);
      const double loss_val = tape.value(loss)(0, 0);
      if (!std::isfinite(loss_val))
        throw numerical_error("train: non-finite training loss at epoch " +
                              std::to_string(epoch));
      tape.backward(loss);

      // Parameter staging order matches param_views order.
      std::vector<ad::Var> param_vars;
      for (auto& c : staged.encoder) {
        param_vars.push_back(c.w);
        param_vars.push_back(c.b);
      }
      for (auto& c : staged.decoder) {
        param_vars.push_back(c.w);
        param_vars.push_back(c.b);
      }
      param_vars.insert(param_vars.end(),
                        {staged.out_w1, staged.out_b1, staged.out_w2,
                         staged.out_b2});
      std::vector<Eigen::VectorXd> grads;
      for (auto v : param_vars) {
        const Eigen::MatrixXd& g = tape.grad(v);
        grads.emplace_back(Eigen::Map<const Eigen::VectorXd>(g.data(), g.size()));
      }
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (auto& g : grads) sq += g.squaredNorm();
        double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm)
          for (auto& g : grads) g *= cfg.clip_norm / norm;
      }
      adam.step(views, grads, ++adam_t, lr);
      train_loss_sum += loss_val;
      ++n_batches;
    }

    const double val_mse = eval_mse(model, dataset, val_ids);
    if (!std::isfinite(val_mse))
      throw numerical_error("train: non-finite validation loss");
    result.history.push_back(
        {epoch, train_loss_sum / n_batches, val_mse, lr});

    if (val_mse < best_val) {
      best_val = val_mse;
      result.model = model;
      lr_bad_epochs = 0;
      stop_bad_epochs = 0;
    } else {
      ++lr_bad_epochs;
      ++stop_bad_epochs;
      if (lr_bad_epochs >= cfg.lr_patience) {
        lr *= cfg.lr_decay;
        lr_bad_epochs = 0;
      }
      if (stop_bad_epochs >= cfg.early_stop_patience) break;
    }
  }
  result.best_val_mse = best_val;
  return result;
}

void write_history_csv(const std::string& path,
                       const std::vector<EpochRecord>& history) {
  std::ofstream os(path);
  if (!os) throw data_error("train: cannot write '" + path + "'");
  os << "epoch,train_mse,val_mse,lr\n";
  os.precision(17);
  for (const auto& r : history)
    os << r.epoch << ',' << r.train_mse << ',' << r.val_mse << ',' << r.lr
       << '\n';
}

std::vector<GridResult> grid_search(const Eigen::MatrixXd& raw_coeffs,
                                    const std::vector<int>& t_in_grid,
                                    const std::vector<int>& k_grid, int t_out,
                                    int units, const TrainConfig& cfg) {
  if (t_in_grid.empty() || k_grid.empty())
    throw config_error("grid_search: empty grid");
  std::vector<GridResult> results;
  for (int t_in : t_in_grid) {
    for (int k : k_grid) {
      GridResult r;
      r.t_in = t_in;
      r.k = k;
      r.seed = cfg.seed * 1000003ull + static_cast<std::uint64_t>(t_in) * 31 +
               static_cast<std::uint64_t>(k);
      try {
        if (k > raw_coeffs.cols())
          throw data_error("grid_search: k exceeds available modes");
        Eigen::MatrixXd coeffs = raw_coeffs.leftCols(k);
        NormStats norm = NormStats::fit(coeffs);
        WindowDataset ds = make_windows(norm.normalize(coeffs), t_in, t_out);
        TrainConfig cell_cfg = cfg;
        cell_cfg.seed = r.seed;
        SurrogateModel init =
            SurrogateModel::init(k, units, t_in, t_out, r.seed);
        init.norm = norm;
        TrainResult tr = train(init, ds, cell_cfg);
        r.best_val_mse = tr.best_val_mse;
        r.model = std::move(tr.model);
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
        r.best_val_mse = std::numeric_limits<double>::infinity();
      }
      results.push_back(std::move(r));
    }
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const GridResult& a, const GridResult& b) {
                     return a.best_val_mse < b.best_val_mse;
                   });
  return results;
}

void write_grid_csv(const std::string& path,
                    const std::vector<GridResult>& results,
                    const std::vector<std::string>& checkpoint_paths) {
  std::ofstream os(path);
  if (!os) throw data_error("grid_search: cannot write '" + path + "'");
  os << "t_in,k,seed,best_val_mse,checkpoint\n";
  os.precision(17);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    os << r.t_in << ',' << r.k << ',' << r.seed << ',';
    if (r.failed)
      os << "failed:" << r.error;
    else
      os << r.best_val_mse;
    os << ',' << (i < checkpoint_paths.size() ? checkpoint_paths[i] : "")
       << '\n';
  }
}

}  // namespace rvar
