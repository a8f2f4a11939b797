// SPDX-License-Identifier: Apache-2.0
#include "rvar/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "rvar/errors.hpp"

namespace rvar {

void SyntheticConfig::validate(int min_days) const {
  if (grid_h < 8 || grid_w < 8)
    throw config_error("synthetic: grid must be at least 8x8");
  if (n_days < min_days)
    throw config_error("synthetic: n_days too small");
  if (seasonal_period <= 0.0)
    throw config_error("synthetic: seasonal_period must be > 0");
  if (noise_std < 0.0) throw config_error("synthetic: noise_std must be >= 0");
  for (const auto& w : waves)
    if (!std::isfinite(w.amplitude) || !std::isfinite(w.speed) ||
        w.wavenumber < 1 || w.envelope_width <= 0.0)
      throw config_error("synthetic: bad wave component");
}

FieldSeries generate(const SyntheticConfig& cfg) {
  cfg.validate(1);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, two_pi);
  std::vector<double> phases;
  for (std::size_t i = 0; i < cfg.waves.size(); ++i)
    phases.push_back(phase_dist(rng));

  // Meridional envelopes, centered on the mid-latitude row.
  std::vector<Eigen::VectorXd> envelopes;
  for (const auto& w : cfg.waves) {
    Eigen::VectorXd env(cfg.grid_h);
    const double y0 = 0.5 * (cfg.grid_h - 1);
    for (int y = 0; y < cfg.grid_h; ++y) {
      double dy = (y - y0) / w.envelope_width;
      env(y) = std::exp(-0.5 * dy * dy);
    }
    envelopes.push_back(env);
  }

  FieldSeries s;
  s.grid_h = cfg.grid_h;
  s.grid_w = cfg.grid_w;
  s.data.resize(cfg.n_days, static_cast<long>(cfg.grid_h) * cfg.grid_w);
  s.day_index.resize(cfg.n_days);
  std::normal_distribution<double> noise(0.0, 1.0);

  for (int t = 0; t < cfg.n_days; ++t) {
    s.day_index[t] = t;
    const double seasonal =
        cfg.seasonal_amplitude * std::sin(two_pi * t / cfg.seasonal_period);
    for (int y = 0; y < cfg.grid_h; ++y) {
      for (int x = 0; x < cfg.grid_w; ++x) {
        double v = cfg.base_level + seasonal;
        for (std::size_t c = 0; c < cfg.waves.size(); ++c) {
          const auto& w = cfg.waves[c];
          v += w.amplitude * envelopes[c](y) *
               std::sin(two_pi * w.wavenumber * (x - w.speed * t) / cfg.grid_w +
                        phases[c]);
        }
        if (cfg.noise_std > 0.0) v += cfg.noise_std * noise(rng);
        s.data(t, static_cast<long>(y) * cfg.grid_w + x) = v;
      }
    }
  }
  return s;
}

std::pair<FieldSeries, FieldSeries> split_years(const FieldSeries& series,
                                                int train_years, int gap_years,
                                                int test_years,
                                                int min_gap_days,
                                                int days_per_year) {
  series.validate();
  if (train_years < 1 || test_years < 1 || gap_years < 0)
    throw data_error("split: year counts out of range");
  if (gap_years * days_per_year < min_gap_days)
    throw data_error("split: gap shorter than the longest input window");
  const int need = (train_years + gap_years + test_years) * days_per_year;
  if (series.steps() < need)
    throw data_error("split: series shorter than requested year blocks");
  FieldSeries train = series.slice(0, train_years * days_per_year);
  FieldSeries test = series.slice((train_years + gap_years) * days_per_year,
                                  test_years * days_per_year);
  return {std::move(train), std::move(test)};
}

Eigen::VectorXd climatology(const FieldSeries& train, int day_of_year,
                            int days_per_year) {
  train.validate();
  if (day_of_year < 0 || day_of_year >= days_per_year)
    throw data_error("climatology: day of year out of range");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(train.points());
  int count = 0;
  for (int t = 0; t < train.steps(); ++t) {
    if (train.day_index[t] % days_per_year == day_of_year) {
      sum += train.data.row(t).transpose();
      ++count;
    }
  }
  if (count < 2)
    throw data_error("climatology: need at least 2 instances of the day");
  return sum / count;
}

Eigen::MatrixXd persistence(const Eigen::MatrixXd& input_window, int t_out) {
  if (input_window.rows() < 1)
    throw data_error("persistence: empty input window");
  return input_window.row(input_window.rows() - 1).replicate(t_out, 1);
}

}  // namespace rvar
