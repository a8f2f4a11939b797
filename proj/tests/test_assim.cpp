// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "rvar/assim.hpp"
#include "rvar/errors.hpp"
#include "rvar/synthetic.hpp"

using namespace rvar;

namespace {

struct Fixture {
  FieldSeries series;
  PodBasis basis;
  SurrogateModel model;

  static Fixture make(std::uint64_t seed, int t_in = 3, int t_out = 4,
                      int k = 3) {
    Fixture f;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    f.series.grid_h = 4;
    f.series.grid_w = 5;
    const int steps = 16;
    f.series.data.resize(steps, 20);
    f.series.day_index.resize(steps);
    for (int t = 0; t < steps; ++t) {
      f.series.day_index[t] = t;
      for (int p = 0; p < 20; ++p)
        f.series.data(t, p) = 5.0 + std::sin(0.3 * t + 0.5 * p) + 0.1 * d(rng);
    }
    f.basis = compute_pod(f.series, k);
    f.model = SurrogateModel::init(k, 6, t_in, t_out, seed + 1);
    // Give the model non-degenerate weights and matching norm stats.
    std::normal_distribution<double> w(0.0, 0.3);
    for (auto* cells : {&f.model.encoder, &f.model.decoder})
      for (auto& c : *cells) {
        for (long i = 0; i < c.w_gates.size(); ++i) c.w_gates(i) = w(rng);
        for (long i = 0; i < c.b_gates.size(); ++i) c.b_gates(i) = w(rng);
      }
    for (long i = 0; i < f.model.out_w1.size(); ++i) f.model.out_w1(i) = w(rng);
    for (long i = 0; i < f.model.out_w2.size(); ++i) f.model.out_w2(i) = w(rng);
    f.model.norm = NormStats::fit(project_series(f.basis, f.series));
    return f;
  }

  DaProblem problem(int n_locations, double noise_std,
                    std::uint64_t seed) const {
    DaProblem p;
    p.model = &model;
    p.basis = &basis;
    Eigen::MatrixXd raw_window =
        project_series(basis, series).topRows(model.t_in);
    p.background = model.norm.normalize(raw_window);
    Eigen::MatrixXd truth_out =
        series.data.middleRows(model.t_in, model.t_out);
    p.obs = observe(truth_out, series.grid_h, series.grid_w, n_locations,
                    noise_std, seed);
    return p;
  }
};

// Independent straight-line oracle for the objective: plain forward
// pass plus explicit loops over observations, no tape involved.
double oracle_objective(const DaProblem& p, const Eigen::MatrixXd& cand) {
  const SurrogateModel& m = *p.model;
  double j = 0.5 * p.config.b0_inv_scale * (cand - p.background).squaredNorm();

  auto latent = encode(m, cand);
  Eigen::MatrixXd out_norm = decode(m, latent.back().h, m.t_out);
  std::vector<int> flat = p.obs.flat_indices();
  double data_term = 0.0;
  for (int t : p.obs.times) {
    Eigen::VectorXd coeff =
        out_norm.row(t - 1).transpose().cwiseProduct(m.norm.sd) + m.norm.mu;
    Eigen::VectorXd full = p.basis->temporal_mean + p.basis->modes * coeff;
    for (int i = 0; i < p.obs.count(); ++i) {
      double diff = full(flat[i]) - p.obs.values(t - 1, i);
      data_term += diff * diff;
    }
  }
  double scale = 0.5 * p.config.r_inv_scale;
  if (p.config.misfit_normalization && p.obs.count() > 0)
    scale /= static_cast<double>(p.obs.count()) * m.t_out;
  return j + scale * data_term;
}

}  // namespace

TEST_CASE("observe samples the truth without replacement") {
  Fixture f = Fixture::make(1);
  Eigen::MatrixXd truth = f.series.data.topRows(4);

  SUBCASE("noiseless values match the field exactly") {
    ObservationSet obs = observe(truth, 4, 5, 7, 0.0, 3);
    CHECK(obs.count() == 7);
    CHECK(obs.values.rows() == 4);
    CHECK(obs.grid_h == 4);
    CHECK(obs.grid_w == 5);
    std::vector<int> flat = obs.flat_indices();
    std::set<int> unique(flat.begin(), flat.end());
    CHECK(unique.size() == 7);  // no repeats
    for (int t = 0; t < 4; ++t)
      for (int i = 0; i < 7; ++i)
        CHECK(obs.values(t, i) == truth(t, flat[i]));
    // Times cover the whole window, 1-based.
    REQUIRE(obs.times.size() == 4);
    CHECK(obs.times.front() == 1);
    CHECK(obs.times.back() == 4);
  }

  SUBCASE("full coverage touches every grid point once") {
    ObservationSet obs = observe(truth, 4, 5, 20, 0.0, 4);
    std::vector<int> flat = obs.flat_indices();
    std::set<int> unique(flat.begin(), flat.end());
    CHECK(unique.size() == 20);
  }

  SUBCASE("noise statistics are honest") {
    // Constant field, many samples: residuals are exactly the noise.
    Eigen::MatrixXd flat_field = Eigen::MatrixXd::Constant(500, 20, 2.0);
    ObservationSet obs = observe(flat_field, 4, 5, 20, 0.7, 5);
    Eigen::MatrixXd resid = obs.values.array() - 2.0;
    double sd = std::sqrt(resid.squaredNorm() / resid.size());
    CHECK(sd == doctest::Approx(0.7).epsilon(0.02));
    double mean = resid.mean();
    CHECK(std::abs(mean) < 0.02);
  }

  SUBCASE("draws are seeded") {
    ObservationSet a = observe(truth, 4, 5, 6, 0.1, 7);
    ObservationSet b = observe(truth, 4, 5, 6, 0.1, 7);
    ObservationSet c = observe(truth, 4, 5, 6, 0.1, 8);
    CHECK(a.loc_rows == b.loc_rows);
    CHECK(a.values == b.values);
    CHECK((a.loc_rows != c.loc_rows || a.values != c.values));
  }

  SUBCASE("guards") {
    CHECK_THROWS_AS(observe(truth, 4, 5, 21, 0.0, 1), data_error);
    CHECK_THROWS_AS(observe(truth, 4, 5, 0, 0.0, 1), data_error);
    CHECK_THROWS_AS(observe(truth, 3, 5, 5, 0.0, 1), data_error);
  }
}

TEST_CASE("observation set round trip") {
  Fixture f = Fixture::make(2);
  ObservationSet obs = observe(f.series.data.topRows(4), 4, 5, 9, 0.3, 11);
  const std::string path = "./obs.rvar.tmp";
  obs.save(path);
  ObservationSet r = ObservationSet::load(path);
  CHECK(r.loc_rows == obs.loc_rows);
  CHECK(r.loc_cols == obs.loc_cols);
  CHECK(r.times == obs.times);
  CHECK(r.values == obs.values);
  CHECK(r.noise_std == obs.noise_std);
  CHECK(r.grid_h == 4);
  CHECK(r.grid_w == 5);
  std::remove(path.c_str());
}

TEST_CASE("objective trivial cases") {
  Fixture f = Fixture::make(3);
  DaProblem p = f.problem(8, 0.0, 13);

  SUBCASE("background term vanishes at the background") {
    p.config.r_inv_scale = 0.0;
    CHECK(objective(p, p.background) == 0.0);
    // And is the exact half squared distance elsewhere.
    Eigen::MatrixXd cand = p.background;
    cand(0, 0) += 2.0;
    p.config.b0_inv_scale = 0.5;
    CHECK(objective(p, cand) == doctest::Approx(0.25 * 4.0).epsilon(1e-14));
  }

  SUBCASE("zero scales give a zero objective") {
    p.config.b0_inv_scale = 0.0;
    p.config.r_inv_scale = 0.0;
    CHECK(objective(p, p.background) == 0.0);
  }
}

TEST_CASE("objective matches the straight-line oracle") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> d(0.0, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    Fixture f = Fixture::make(100 + trial);
    DaProblem p = f.problem(6 + trial, 0.2, 50 + trial);
    if (trial % 2 == 1) p.config.misfit_normalization = false;
    Eigen::MatrixXd cand = p.background;
    for (long i = 0; i < cand.size(); ++i) cand(i) += d(rng);
    double got = objective(p, cand);
    double expected = oracle_objective(p, cand);
    CHECK(std::abs(got - expected) <=
          1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("objective_and_gradient agrees with the separate entry points") {
  Fixture f = Fixture::make(4);
  DaProblem p = f.problem(7, 0.1, 17);
  Eigen::MatrixXd cand = p.background.array() + 0.3;
  Eigen::MatrixXd g;
  double j = objective_and_gradient(p, cand, &g);
  CHECK(j == objective(p, cand));
  CHECK(g == gradient(p, cand));
  CHECK(g.rows() == p.background.rows());
  CHECK(g.cols() == p.background.cols());
}

TEST_CASE("gradient matches central finite differences") {
  Fixture f = Fixture::make(5);
  DaProblem p = f.problem(8, 0.2, 19);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> d(0.0, 0.4);
  Eigen::MatrixXd cand = p.background;
  for (long i = 0; i < cand.size(); ++i) cand(i) += d(rng);

  Eigen::MatrixXd g = gradient(p, cand);
  const double h = 1e-6;
  for (long i = 0; i < cand.size(); ++i) {
    Eigen::MatrixXd cp = cand, cm = cand;
    cp(i) += h;
    cm(i) -= h;
    double fd = (objective(p, cp) - objective(p, cm)) / (2.0 * h);
    CHECK(std::abs(g(i) - fd) / std::max(1.0, std::abs(fd)) < 1e-5);
  }
}

TEST_CASE("gradient trivial cases") {
  Fixture f = Fixture::make(6);
  DaProblem p = f.problem(6, 0.0, 23);

  SUBCASE("pure background term gives b0 * (cand - bg)") {
    p.config.r_inv_scale = 0.0;
    p.config.b0_inv_scale = 2.0;
    Eigen::MatrixXd cand = p.background.array() + 1.5;
    Eigen::MatrixXd g = gradient(p, cand);
    Eigen::MatrixXd expected = 2.0 * (cand - p.background);
    CHECK((g - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SUBCASE("gradient at the background has no background component") {
    p.config.b0_inv_scale = 3.0;
    Eigen::MatrixXd g_at_bg = gradient(p, p.background);
    p.config.b0_inv_scale = 0.0;
    Eigen::MatrixXd g_data_only = gradient(p, p.background);
    CHECK((g_at_bg - g_data_only).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("minimize fixed points and descent") {
  Fixture f = Fixture::make(7);

  SUBCASE("no data term: the background is already optimal") {
    DaProblem p = f.problem(6, 0.0, 29);
    p.config.r_inv_scale = 0.0;
    DaResult res = minimize(p);
    CHECK(res.converged);
    CHECK((res.analysis_window - p.background).lpNorm<Eigen::Infinity>() <
          1e-8);
  }

  SUBCASE("objective trace is non-increasing and improves") {
    DaProblem p = f.problem(10, 0.1, 31);
    // Perturb the background so there is something to correct.
    p.background.array() += 0.5;
    DaResult res = minimize(p);
    REQUIRE(res.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < res.objective_trace.size(); ++i)
      CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-12);
    CHECK(res.objective_trace.back() < res.objective_trace.front());
    CHECK(res.corrected_forecast.rows() == f.model.t_out);
    CHECK(res.corrected_forecast.cols() == 20);
    CHECK(res.iterations > 0);
  }

  SUBCASE("observations manufactured from the background keep it fixed") {
    // Replace the observed values with the model's own noiseless
    // forecast at the observation points: the background is then a
    // global minimum and minimize must not wander off.
    DaProblem p = f.problem(8, 0.0, 37);
    Eigen::MatrixXd raw_bg = f.model.norm.denormalize(p.background);
    Forecast fc = forecast(f.model, f.basis, raw_bg);
    std::vector<int> flat = p.obs.flat_indices();
    for (int t : p.obs.times)
      for (int i = 0; i < p.obs.count(); ++i)
        p.obs.values(t - 1, i) = fc.full(t - 1, flat[i]);
    double j0 = objective(p, p.background);
    CHECK(j0 < 1e-18);
    DaResult res = minimize(p);
    CHECK((res.analysis_window - p.background).lpNorm<Eigen::Infinity>() <
          1e-6);
  }
}

TEST_CASE("scaling both terms together preserves the minimizer") {
  Fixture f = Fixture::make(8);
  DaProblem p = f.problem(9, 0.05, 41);
  p.background.array() += 0.3;
  DaResult base = minimize(p);

  DaProblem scaled = p;
  scaled.config.b0_inv_scale *= 8.0;
  scaled.config.r_inv_scale *= 8.0;
  DaResult res = minimize(scaled);
  CHECK((res.analysis_window - base.analysis_window).lpNorm<Eigen::Infinity>() <
        1e-4);
  // And the objective scales by the same factor at the solution.
  CHECK(objective(scaled, base.analysis_window) ==
        doctest::Approx(8.0 * objective(p, base.analysis_window))
            .epsilon(1e-10));
}

TEST_CASE("problem validation catches inconsistencies") {
  Fixture f = Fixture::make(9);
  DaProblem p = f.problem(5, 0.0, 43);
  p.validate();  // well-formed baseline

  SUBCASE("background shape") {
    DaProblem bad = p;
    bad.background = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(bad.validate(), data_error);
  }
  SUBCASE("observation time outside the forecast window") {
    DaProblem bad = p;
    bad.obs.times.back() = f.model.t_out + 1;
    CHECK_THROWS_AS(bad.validate(), data_error);
  }
  SUBCASE("grid mismatch with the basis") {
    DaProblem bad = p;
    bad.obs.grid_w = 7;
    CHECK_THROWS_AS(bad.validate(), data_error);
  }
  SUBCASE("negative scale") {
    DaProblem bad = p;
    bad.config.r_inv_scale = -1.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
  }
}

TEST_CASE("campaign sweeps every origin and tolerates n_locations = 0") {
  Fixture f = Fixture::make(10);
  CampaignConfig cfg;
  cfg.n_locations = 0;
  cfg.seed = 3;
  int seen = 0;
  CampaignSummary s =
      run_campaign(f.model, f.basis, f.series, cfg,
                   [&](const CampaignWindow& w) {
                     ++seen;
                     CHECK(w.corrected == w.uncorrected);
                   });
  // 16 days, T_in = 3, T_out = 4: 10 valid origins.
  CHECK(s.windows == 10);
  CHECK(seen == 10);
  CHECK(s.failures == 0);
  CHECK(s.mae_corrected.size() == f.model.t_out);
  CHECK(s.mae_corrected == s.mae_uncorrected);
}

TEST_CASE("campaign with observations reduces error on average") {
  Fixture f = Fixture::make(11);
  CampaignConfig cfg;
  cfg.n_locations = 10;
  cfg.noise_std = 0.05;
  cfg.seed = 5;
  CampaignSummary s = run_campaign(f.model, f.basis, f.series, cfg);
  CHECK(s.failures == 0);
  // The untrained emulator is bad; assimilation must not make the
  // overall error worse.
  CHECK(s.mae_corrected.mean() <= s.mae_uncorrected.mean() + 1e-9);
}
