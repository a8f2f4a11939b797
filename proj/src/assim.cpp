// SPDX-License-Identifier: Apache-2.0
#include "rvar/assim.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "rvar/container.hpp"
#include "rvar/errors.hpp"
#include "rvar/lbfgs.hpp"

namespace rvar {

std::vector<int> ObservationSet::flat_indices() const {
  std::vector<int> flat(loc_rows.size());
  for (std::size_t i = 0; i < flat.size(); ++i)
    flat[i] = loc_rows[i] * grid_w + loc_cols[i];
  return flat;
}

void ObservationSet::save(const std::string& path) const {
  Container c;
  auto widen = [](const std::vector<int>& v) {
    return std::vector<std::int64_t>(v.begin(), v.end());
  };
  c.add_i64("loc_rows", widen(loc_rows));
  c.add_i64("loc_cols", widen(loc_cols));
  c.add_i64("times", widen(times));
  c.add_matrix("values", values);
  c.add_scalar("noise_std", noise_std);
  c.add_i64("grid_dims", {grid_h, grid_w});
  c.write(path);
}

ObservationSet ObservationSet::load(const std::string& path) {
  Container c = Container::read(path);
  ObservationSet o;
  auto narrow = [](const std::vector<std::int64_t>& v) {
    return std::vector<int>(v.begin(), v.end());
  };
  o.loc_rows = narrow(c.get_i64("loc_rows"));
  o.loc_cols = narrow(c.get_i64("loc_cols"));
  o.times = narrow(c.get_i64("times"));
  o.values = c.get_matrix("values");
  o.noise_std = c.get_scalar("noise_std");
  auto dims = c.get_i64("grid_dims");
  if (dims.size() != 2) throw data_error("obs: bad grid_dims block");
  o.grid_h = static_cast<int>(dims[0]);
  o.grid_w = static_cast<int>(dims[1]);
  return o;
}

ObservationSet observe(const Eigen::MatrixXd& truth_segment, int grid_h,
                       int grid_w, int n_locations, double noise_std,
                       std::uint64_t seed) {
  const long n = static_cast<long>(grid_h) * grid_w;
  if (truth_segment.cols() != n)
    throw data_error("observe: truth width != grid size");
  if (n_locations < 1 || n_locations > n)
    throw data_error("observe: n_locations out of range");
  const int t_out = static_cast<int>(truth_segment.rows());

  std::mt19937_64 rng(seed);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);

  ObservationSet obs;
  obs.noise_std = noise_std;
  obs.grid_h = grid_h;
  obs.grid_w = grid_w;
  obs.loc_rows.resize(n_locations);
  obs.loc_cols.resize(n_locations);
  for (int i = 0; i < n_locations; ++i) {
    obs.loc_rows[i] = all[i] / grid_w;
    obs.loc_cols[i] = all[i] % grid_w;
  }
  obs.times.resize(t_out);
  std::iota(obs.times.begin(), obs.times.end(), 1);
  obs.values.resize(t_out, n_locations);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < t_out; ++t)
    for (int i = 0; i < n_locations; ++i)
      obs.values(t, i) = truth_segment(t, all[i]) +
                         (noise_std > 0.0 ? noise_std * noise(rng) : 0.0);
  return obs;
}

void DaProblem::validate() const {
  if (!model || !basis) throw data_error("assim: problem lacks model or basis");
  if (model->k != basis->k) throw data_error("assim: model/basis k mismatch");
  if (background.rows() != model->t_in || background.cols() != model->k)
    throw data_error("assim: background window shape mismatch");
  if (obs.count() < 1) throw data_error("assim: empty observation set");
  if (obs.values.rows() != static_cast<long>(obs.times.size()) ||
      obs.values.cols() != obs.count())
    throw data_error("assim: observation value shape mismatch");
  if (static_cast<long>(obs.grid_h) * obs.grid_w != basis->points())
    throw data_error("assim: observation grid does not match basis");
  for (std::size_t i = 0; i < obs.loc_rows.size(); ++i)
    if (obs.loc_rows[i] < 0 || obs.loc_rows[i] >= obs.grid_h ||
        obs.loc_cols[i] < 0 || obs.loc_cols[i] >= obs.grid_w)
      throw data_error("assim: observation location outside grid");
  for (int t : obs.times)
    if (t < 1 || t > model->t_out)
      throw data_error("assim: observation time outside forecast window");
  if (config.b0_inv_scale < 0.0 || config.r_inv_scale < 0.0)
    throw config_error("assim: covariance scales must be >= 0");
  if (config.grad_tol <= 0.0 || config.step_tol <= 0.0)
    throw config_error("assim: tolerances must be > 0");
}

namespace {

double objective_impl(const DaProblem& problem, const Eigen::MatrixXd& candidate,
                      Eigen::MatrixXd* grad) {
  const SurrogateModel& model = *problem.model;
  const PodBasis& basis = *problem.basis;
  const DaConfig& cfg = problem.config;
  if (candidate.rows() != model.t_in || candidate.cols() != model.k)
    throw data_error("assim: candidate window shape mismatch");
  const int m = problem.obs.count();
  const int n_times = static_cast<int>(problem.obs.times.size());

  // Observation operator composed with reconstruction: rows of the
  // basis and mean restricted to the sensor locations.
  std::vector<int> flat = problem.obs.flat_indices();
  Eigen::MatrixXd phi_obs(m, model.k);
  Eigen::VectorXd mean_obs(m);
  for (int i = 0; i < m; ++i) {
    phi_obs.row(i) = basis.modes.row(flat[i]);
    mean_obs(i) = basis.temporal_mean(flat[i]);
  }

  double data_scale = 0.5 * cfg.r_inv_scale;
  if (cfg.misfit_normalization)
    data_scale /= static_cast<double>(m) * n_times;

  double j = 0.0;
  auto build = [&](ad::Tape& tape, const std::vector<ad::Var>& inputs,
                   const std::vector<ad::Var>& outputs) -> ad::Var {
    ad::Var mu_c = tape.constant(model.norm.mu);
    ad::Var sd_c = tape.constant(model.norm.sd);
    ad::Var phi_c = tape.constant(phi_obs);
    ad::Var mean_c = tape.constant(mean_obs);

    ad::Var bg{-1};
    for (int t = 0; t < model.t_in; ++t) {
      ad::Var diff = tape.sub(
          inputs[t],
          tape.constant(problem.background.row(t).transpose()));
      ad::Var term = tape.sum_sq(diff);
      bg = t == 0 ? term : tape.add(bg, term);
    }

    ad::Var data{-1};
    for (int i = 0; i < n_times; ++i) {
      const int step = problem.obs.times[i] - 1;
      ad::Var denorm = tape.add(tape.mul(outputs[step], sd_c), mu_c);
      ad::Var pred = tape.add(tape.matmul(phi_c, denorm), mean_c);
      ad::Var diff = tape.sub(
          pred, tape.constant(problem.obs.values.row(i).transpose()));
      ad::Var term = tape.sum_sq(diff);
      data = i == 0 ? term : tape.add(data, term);
    }

    ad::Var total = tape.scale(bg, 0.5 * cfg.b0_inv_scale);
    if (cfg.r_inv_scale > 0.0)
      total = tape.add(total, tape.scale(data, data_scale));
    return total;
  };

  if (grad) {
    *grad = grad_wrt_input(model, candidate, build, &j);
  } else {
    // Forward-only path still builds the tape; cost is dominated by
    // the forward pass either way.
    Eigen::MatrixXd dummy = grad_wrt_input(model, candidate, build, &j);
  }
  if (!std::isfinite(j))
    throw numerical_error("assim: non-finite objective");
  return j;
}

}  // namespace

double objective(const DaProblem& problem, const Eigen::MatrixXd& candidate) {
  problem.validate();
  return objective_impl(problem, candidate, nullptr);
}

Eigen::MatrixXd gradient(const DaProblem& problem,
                         const Eigen::MatrixXd& candidate) {
  problem.validate();
  Eigen::MatrixXd g;
  objective_impl(problem, candidate, &g);
  return g;
}

double objective_and_gradient(const DaProblem& problem,
                              const Eigen::MatrixXd& candidate,
                              Eigen::MatrixXd* grad) {
  problem.validate();
  return objective_impl(problem, candidate, grad);
}

DaResult minimize(const DaProblem& problem) {
  problem.validate();
  const SurrogateModel& model = *problem.model;
  const int t_in = model.t_in;
  const int k = model.k;
  auto t0 = std::chrono::steady_clock::now();

  auto unflatten = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd w(t_in, k);
    for (int t = 0; t < t_in; ++t)
      w.row(t) = x.segment(static_cast<long>(t) * k, k).transpose();
    return w;
  };
  auto flatten = [&](const Eigen::MatrixXd& w) {
    Eigen::VectorXd x(static_cast<long>(t_in) * k);
    for (int t = 0; t < t_in; ++t)
      x.segment(static_cast<long>(t) * k, k) = w.row(t).transpose();
    return x;
  };

  auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    Eigen::MatrixXd grad;
    double j = objective_impl(problem, unflatten(x), &grad);
    g = flatten(grad);
    return j;
  };

  LbfgsOptions opts;
  opts.max_iters = problem.config.max_iters;
  opts.grad_tol = problem.config.grad_tol;
  opts.step_tol = problem.config.step_tol;
  LbfgsResult lr = lbfgs_minimize(fg, flatten(problem.background), opts);

  DaResult res;
  res.analysis_window = unflatten(lr.x);
  res.objective_trace = lr.trace;
  res.converged = lr.converged;
  res.iterations = lr.iterations;
  Eigen::MatrixXd raw = model.norm.denormalize(res.analysis_window);
  res.corrected_forecast = forecast(model, *problem.basis, raw).full;
  res.wall_time = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return res;
}

CampaignSummary run_campaign(
    const SurrogateModel& model, const PodBasis& basis,
    const FieldSeries& test_series, const CampaignConfig& cfg,
    const std::function<void(const CampaignWindow&)>& sink) {
  test_series.validate();
  if (test_series.points() != basis.points())
    throw data_error("campaign: series/basis grid mismatch");
  const int t_in = model.t_in;
  const int t_out = model.t_out;
  const int len = test_series.steps();
  if (len < t_in + t_out) throw data_error("campaign: series too short");

  CampaignSummary summary;
  summary.mae_corrected = Eigen::VectorXd::Zero(t_out);
  summary.mae_uncorrected = Eigen::VectorXd::Zero(t_out);

  for (int origin = 0; origin + t_in + t_out <= len; ++origin) {
    CampaignWindow w;
    w.origin_day = static_cast<int>(test_series.day_index[origin]);
    try {
      Eigen::MatrixXd truth_in = test_series.data.middleRows(origin, t_in);
      Eigen::MatrixXd truth_out =
          test_series.data.middleRows(origin + t_in, t_out);
      Eigen::MatrixXd raw_coeffs =
          (truth_in.rowwise() - basis.temporal_mean.transpose()) * basis.modes;
      Forecast base = forecast(model, basis, raw_coeffs);
      w.uncorrected = base.full;

      if (cfg.n_locations <= 0) {
        w.corrected = w.uncorrected;
        w.converged = true;
      } else {
        std::uint64_t seed =
            cfg.redraw_locations
                ? cfg.seed + 0x9e3779b97f4a7c15ull * (origin + 1)
                : cfg.seed;
        DaProblem problem;
        problem.model = &model;
        problem.basis = &basis;
        problem.background = model.norm.normalize(raw_coeffs);
        problem.obs = observe(truth_out, test_series.grid_h, test_series.grid_w,
                              cfg.n_locations, cfg.noise_std, seed);
        problem.config = cfg.da;
        DaResult r = minimize(problem);
        w.corrected = r.corrected_forecast;
        w.iterations = r.iterations;
        w.j_initial = r.objective_trace.front();
        w.j_final = r.objective_trace.back();
        w.wall_time = r.wall_time;
        w.converged = r.converged;
      }

      for (int d = 0; d < t_out; ++d) {
        summary.mae_corrected(d) +=
            (w.corrected.row(d) - truth_out.row(d)).cwiseAbs().mean();
        summary.mae_uncorrected(d) +=
            (w.uncorrected.row(d) - truth_out.row(d)).cwiseAbs().mean();
      }
      ++summary.windows;
    } catch (const std::exception& e) {
      w.failed = true;
      w.error = e.what();
      ++summary.failures;
    }
    if (sink) sink(w);
  }
  if (summary.windows > 0) {
    summary.mae_corrected /= summary.windows;
    summary.mae_uncorrected /= summary.windows;
  }
  return summary;
}

}  // namespace rvar
