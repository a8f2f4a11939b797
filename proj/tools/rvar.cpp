// SPDX-License-Identifier: Apache-2.0
//
// Single-binary pipeline driver. Subcommands: generate, pod, train,
// grid-search, forecast, assimilate, evaluate. Numeric settings come
// from key=value config files with flag overrides (flag > config >
// default). Every stage writes a JSON manifest with content hashes of
// its inputs and outputs; re-running with identical inputs is a no-op
// unless --force is given.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
// failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rvar/assim.hpp"
#include "rvar/container.hpp"
#include "rvar/errors.hpp"
#include "rvar/metrics.hpp"
#include "rvar/pod.hpp"
#include "rvar/synthetic.hpp"
#include "rvar/train.hpp"

using json = nlohmann::ordered_json;
using namespace rvar;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hash_hex(const std::string& path) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_file(path)));
  return buf;
}

json hash_inputs(const std::vector<std::string>& paths) {
  json j = json::object();
  for (const auto& p : paths) j[p] = hash_hex(p);
  return j;
}

// A stage is current when a previous manifest recorded the same
// settings and input hashes and every listed output still matches.
bool stage_current(const std::string& manifest_path, const json& settings,
                   const json& inputs) {
  std::ifstream is(manifest_path);
  if (!is) return false;
  json m;
  try {
    is >> m;
  } catch (...) {
    return false;
  }
  if (m.value("settings", json()) != settings) return false;
  if (m.value("inputs", json()) != inputs) return false;
  if (!m.contains("outputs")) return false;
  for (auto& [path, hash] : m["outputs"].items()) {
    if (!std::filesystem::exists(path)) return false;
    if (hash_hex(path) != hash.get<std::string>()) return false;
  }
  return true;
}

void write_manifest(const std::string& manifest_path, const std::string& cmd,
                    const json& settings, const json& inputs,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::string>& notes = {}) {
  json m;
  m["tool"] = std::string("rvar ") + kVersion;
  m["command"] = cmd;
  m["settings"] = settings;
  m["inputs"] = inputs;
  m["outputs"] = json::object();
  for (const auto& p : outputs) m["outputs"][p] = hash_hex(p);
  if (!notes.empty()) m["notes"] = notes;
  std::ofstream os(manifest_path);
  if (!os) throw data_error("cli: cannot write manifest '" + manifest_path + "'");
  os << m.dump(2) << '\n';
}

std::vector<int> parse_int_list(const std::string& text, const char* key) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (...) {
      throw config_error(std::string("cli: bad integer in --") + key + ": '" +
                         item + "'");
    }
  }
  if (out.empty())
    throw config_error(std::string("cli: empty list for --") + key);
  return out;
}

// "amp:wavenumber:width:speed,..." -> wave components.
std::vector<WaveComponent> parse_waves(const std::string& text) {
  std::vector<WaveComponent> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    WaveComponent w;
    if (std::sscanf(item.c_str(), "%lf:%d:%lf:%lf", &w.amplitude,
                    &w.wavenumber, &w.envelope_width, &w.speed) != 4)
      throw config_error("cli: bad wave spec '" + item +
                         "' (want amp:wavenumber:width:speed)");
    out.push_back(w);
  }
  return out;
}

// "name:row0:row1:col0:col1;..." -> regions.
std::vector<Region> parse_regions(const std::string& text, int grid_h,
                                  int grid_w) {
  std::vector<Region> out;
  if (text.empty() || text == "all") {
    out.push_back({"all", 0, grid_h, 0, grid_w});
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    Region r;
    char name[128];
    if (std::sscanf(item.c_str(), "%127[^:]:%d:%d:%d:%d", name, &r.row_begin,
                    &r.row_end, &r.col_begin, &r.col_end) != 5)
      throw config_error("cli: bad region spec '" + item +
                         "' (want name:row0:row1:col0:col1)");
    r.name = name;
    out.push_back(r);
  }
  return out;
}

void require_file(const std::string& path, const char* what) {
  if (!std::filesystem::exists(path))
    throw data_error(std::string("cli: missing ") + what + " file '" + path +
                     "'");
}

void add_config_flag(CLI::App* sub) {
  // Registered for --help only; the value is consumed by a pre-pass in
  // main() that validates keys and injects them ahead of user flags.
  static std::string sink;
  sub->add_option("--config", sink, "key=value config file (flags override it)");
  sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

// Pull "--config <file>" / "--config=<file>" out of the argument list.
std::string extract_config_path(std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size();) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + i);
    } else {
      ++i;
    }
  }
  return path;
}

// Insert config key=value pairs as --key=value tokens right after the
// subcommand name, so later user flags win under the take-last policy.
// Unknown keys are an error naming the key.
void inject_config(CLI::App& app, std::vector<std::string>& args,
                   const std::string& path) {
  std::string sub_name;
  std::size_t sub_pos = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (!args[i].empty() && args[i][0] != '-') {
      sub_name = args[i];
      sub_pos = i;
      break;
    }
  }
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(sub_name);
  } catch (...) {
    throw config_error("cli: --config given but no subcommand named '" +
                       sub_name + "'");
  }
  std::ifstream is(path);
  if (!is) throw config_error("cli: cannot read config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("cli: config line " + std::to_string(lineno) +
                         " is not key=value: '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
      key.pop_back();
    const auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);
    if (!sub->get_option_no_throw("--" + key))
      throw config_error("cli: unknown config key '" + key + "' for '" +
                         sub_name + "'");
    tokens.push_back("--" + key + "=" + value);
  }
  args.insert(args.begin() + sub_pos + 1, tokens.begin(), tokens.end());
}

// Shared training options.
struct TrainOpts {
  TrainConfig cfg;
  int units = 20;
  int t_out = 20;

  void attach(CLI::App* sub) {
    sub->add_option("--units", units, "LSTM units per cell");
    sub->add_option("--t-out", t_out, "forecast window length");
    sub->add_option("--lr0", cfg.lr0, "initial learning rate");
    sub->add_option("--lr-decay", cfg.lr_decay, "plateau decay factor");
    sub->add_option("--lr-patience", cfg.lr_patience, "epochs before decay");
    sub->add_option("--batch", cfg.batch_size, "batch size");
    sub->add_option("--epochs", cfg.max_epochs, "maximum epochs");
    sub->add_option("--early-stop", cfg.early_stop_patience,
                    "epochs without improvement before stopping");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--split", cfg.split_fraction, "training share of windows");
    sub->add_flag("--block-split", cfg.block_split,
                  "contiguous split instead of random window origins");
    sub->add_option("--clip", cfg.clip_norm, "gradient clip norm (<=0 off)");
  }

  json settings() const {
    return {{"units", units},      {"t_out", t_out},
            {"lr0", cfg.lr0},      {"lr_decay", cfg.lr_decay},
            {"lr_patience", cfg.lr_patience},
            {"batch", cfg.batch_size},
            {"epochs", cfg.max_epochs},
            {"early_stop", cfg.early_stop_patience},
            {"seed", cfg.seed},    {"split", cfg.split_fraction},
            {"block_split", cfg.block_split},
            {"clip", cfg.clip_norm}};
  }
};

// ------------------------------------------------------------ generate

int cmd_generate(const SyntheticConfig& cfg, const std::string& wave_spec,
                 const std::string& out, bool force) {
  SyntheticConfig c = cfg;
  c.waves = parse_waves(wave_spec);
  c.validate();

  json settings = {{"grid_h", c.grid_h},
                   {"grid_w", c.grid_w},
                   {"n_days", c.n_days},
                   {"base_level", c.base_level},
                   {"seasonal_amplitude", c.seasonal_amplitude},
                   {"seasonal_period", c.seasonal_period},
                   {"noise_std", c.noise_std},
                   {"seed", c.seed},
                   {"waves", wave_spec}};
  const std::string manifest = out + ".manifest.json";
  if (!force && stage_current(manifest, settings, json::object())) {
    std::printf("generate: '%s' is up to date\n", out.c_str());
    return 0;
  }
  FieldSeries s = generate(c);
  s.save(out);
  write_manifest(manifest, "generate", settings, json::object(), {out});
  std::printf("generate: wrote %d days of %dx%d fields to '%s'\n", s.steps(),
              c.grid_h, c.grid_w, out.c_str());
  return 0;
}

// ----------------------------------------------------------------- pod

int cmd_pod(const std::string& field, int k, const std::string& out,
            const std::string& coeffs_out, bool force) {
  require_file(field, "field");
  json settings = {{"k", k}, {"coeffs_out", coeffs_out}};
  json inputs = hash_inputs({field});
  const std::string manifest = out + ".manifest.json";
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("pod: '%s' is up to date\n", out.c_str());
    return 0;
  }

  FieldSeries s = FieldSeries::load(field);
  PodBasis basis = compute_pod(s, k);
  Eigen::MatrixXd coeffs = project_series(basis, s);
  NormStats norm = NormStats::fit(coeffs);
  basis.save(out, &norm);

  std::vector<std::string> outputs = {out};
  if (!coeffs_out.empty()) {
    Container c;
    c.add_matrix("coeffs", coeffs);
    c.add_i64("day_index", s.day_index);
    c.write(coeffs_out);
    outputs.push_back(coeffs_out);
  }
  double total = basis.singular_values.squaredNorm();
  double kept = basis.singular_values.head(k).squaredNorm();
  write_manifest(manifest, "pod", settings, inputs, outputs);
  std::printf("pod: %d modes keep %.2f%% of centered variance\n", k,
              total > 0 ? 100.0 * kept / total : 100.0);
  return 0;
}

// --------------------------------------------------------------- train

int cmd_train(const std::string& field, int k, int t_in, const TrainOpts& topt,
              const std::string& out_dir, bool force) {
  require_file(field, "field");
  std::filesystem::create_directories(out_dir);
  const std::string basis_path = out_dir + "/basis.rvar";
  const std::string model_path = out_dir + "/model.rvar";
  const std::string history_path = out_dir + "/history.csv";
  const std::string manifest = out_dir + "/train_manifest.json";

  json settings = topt.settings();
  settings["k"] = k;
  settings["t_in"] = t_in;
  json inputs = hash_inputs({field});
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("train: '%s' is up to date\n", out_dir.c_str());
    return 0;
  }

  FieldSeries s = FieldSeries::load(field);
  PodBasis basis = compute_pod(s, k);
  Eigen::MatrixXd coeffs = project_series(basis, s);
  NormStats norm = NormStats::fit(coeffs);
  basis.save(basis_path, &norm);

  WindowDataset ds = make_windows(norm.normalize(coeffs), t_in, topt.t_out);
  SurrogateModel init =
      SurrogateModel::init(k, topt.units, t_in, topt.t_out, topt.cfg.seed);
  init.norm = norm;
  TrainResult res = train(init, ds, topt.cfg);
  res.model.save(model_path);
  write_history_csv(history_path, res.history);

  write_manifest(manifest, "train", settings, inputs,
                 {basis_path, model_path, history_path});
  std::printf("train: %zu epochs, best val MSE %.6e -> '%s'\n",
              res.history.size(), res.best_val_mse, model_path.c_str());
  return 0;
}

// --------------------------------------------------------- grid-search

int cmd_grid_search(const std::string& field, const std::string& t_in_list,
                    const std::string& k_list, const TrainOpts& topt,
                    const std::string& out_dir, bool force) {
  require_file(field, "field");
  std::filesystem::create_directories(out_dir);
  std::vector<int> t_in_grid = parse_int_list(t_in_list, "t-in-grid");
  std::vector<int> k_grid = parse_int_list(k_list, "k-grid");
  const std::string manifest = out_dir + "/grid_manifest.json";
  const std::string csv_path = out_dir + "/grid.csv";

  json settings = topt.settings();
  settings["t_in_grid"] = t_in_list;
  settings["k_grid"] = k_list;
  json inputs = hash_inputs({field});
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("grid-search: '%s' is up to date\n", out_dir.c_str());
    return 0;
  }

  FieldSeries s = FieldSeries::load(field);
  const int k_max = *std::max_element(k_grid.begin(), k_grid.end());
  PodBasis basis = compute_pod(s, k_max);
  Eigen::MatrixXd coeffs = project_series(basis, s);

  auto results =
      grid_search(coeffs, t_in_grid, k_grid, topt.t_out, topt.units, topt.cfg);

  std::vector<std::string> outputs = {csv_path};
  std::vector<std::string> checkpoints;
  for (const auto& r : results) {
    if (r.failed) {
      checkpoints.emplace_back();
      continue;
    }
    std::string path = out_dir + "/model_tin" + std::to_string(r.t_in) + "_k" +
                       std::to_string(r.k) + ".rvar";
    r.model.save(path);
    checkpoints.push_back(path);
    outputs.push_back(path);
  }
  write_grid_csv(csv_path, results, checkpoints);
  write_manifest(manifest, "grid-search", settings, inputs, outputs);

  const auto& best = results.front();
  if (best.failed) {
    std::fprintf(stderr, "grid-search: every cell failed (%s)\n",
                 best.error.c_str());
    return 3;
  }
  std::printf("grid-search: best t_in=%d k=%d val MSE %.6e (table: '%s')\n",
              best.t_in, best.k, best.best_val_mse, csv_path.c_str());
  return 0;
}

// ------------------------------------------------------------ forecast

int cmd_forecast(const std::string& model_path, const std::string& basis_path,
                 const std::string& field, int origin, const std::string& out,
                 bool force) {
  require_file(model_path, "model");
  require_file(basis_path, "basis");
  require_file(field, "field");
  json settings = {{"origin", origin}};
  json inputs = hash_inputs({model_path, basis_path, field});
  const std::string manifest = out + ".manifest.json";
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("forecast: '%s' is up to date\n", out.c_str());
    return 0;
  }

  SurrogateModel model = SurrogateModel::load(model_path);
  PodBasis basis = PodBasis::load(basis_path, &model.norm);
  FieldSeries s = FieldSeries::load(field);
  if (origin < 0 || origin + model.t_in > s.steps())
    throw data_error("forecast: origin leaves no room for the input window");

  Forecast fc =
      forecast_full(model, basis, s.data.middleRows(origin, model.t_in));
  Container c;
  c.add_matrix("reduced", fc.reduced);
  c.add_tensor3("full", fc.full, s.grid_h, s.grid_w);
  c.add_i64("origin_day", {s.day_index[origin]});
  c.write(out);
  write_manifest(manifest, "forecast", settings, inputs, {out});
  std::printf("forecast: %d-day forecast from day %lld -> '%s'\n", model.t_out,
              static_cast<long long>(s.day_index[origin]), out.c_str());
  return 0;
}

// ---------------------------------------------------------- assimilate

int cmd_assimilate(const std::string& model_path, const std::string& basis_path,
                   const std::string& field, int n_locations, double noise_std,
                   std::uint64_t seed, bool fixed_locations, const DaConfig& da,
                   const std::string& out, bool force) {
  require_file(model_path, "model");
  require_file(basis_path, "basis");
  require_file(field, "field");

  SurrogateModel model = SurrogateModel::load(model_path);
  PodBasis basis = PodBasis::load(basis_path, &model.norm);
  FieldSeries s = FieldSeries::load(field);

  std::vector<std::string> notes;
  if (n_locations < 0) {
    // Default sensor density: 5000 of 12138 points, scaled to this grid.
    n_locations = static_cast<int>(s.points() * 5000 / 12138);
    notes.push_back("n_locations defaulted to floor(points * 5000 / 12138) = " +
                    std::to_string(n_locations));
  }
  if (n_locations == 0)
    std::fprintf(stderr,
                 "assimilate: warning: zero observations, corrected forecasts "
                 "will equal the uncorrected ones\n");

  json settings = {{"n_locations", n_locations},
                   {"noise_std", noise_std},
                   {"seed", seed},
                   {"fixed_locations", fixed_locations},
                   {"b0_inv_scale", da.b0_inv_scale},
                   {"r_inv_scale", da.r_inv_scale},
                   {"misfit_normalization", da.misfit_normalization},
                   {"max_iters", da.max_iters},
                   {"grad_tol", da.grad_tol},
                   {"step_tol", da.step_tol}};
  json inputs = hash_inputs({model_path, basis_path, field});
  const std::string manifest = out + ".manifest.json";
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("assimilate: '%s' is up to date\n", out.c_str());
    return 0;
  }

  CampaignConfig cfg;
  cfg.n_locations = n_locations;
  cfg.noise_std = noise_std;
  cfg.seed = seed;
  cfg.redraw_locations = !fixed_locations;
  cfg.da = da;

  const int t_out = model.t_out;
  Eigen::MatrixXd err_c = Eigen::MatrixXd::Zero(t_out, s.points());
  Eigen::MatrixXd err_u = Eigen::MatrixXd::Zero(t_out, s.points());
  std::vector<std::int64_t> origins, iterations, converged;
  std::vector<double> j_initial, j_final;
  const long base = s.day_index.front();

  CampaignSummary summary = run_campaign(
      model, basis, s, cfg, [&](const CampaignWindow& w) {
        if (w.failed) {
          std::fprintf(stderr, "assimilate: window at day %d failed: %s\n",
                       w.origin_day, w.error.c_str());
          return;
        }
        const int o = static_cast<int>(w.origin_day - base);
        Eigen::MatrixXd truth = s.data.middleRows(o + model.t_in, t_out);
        err_c += (w.corrected - truth).cwiseAbs();
        err_u += (w.uncorrected - truth).cwiseAbs();
        origins.push_back(w.origin_day);
        iterations.push_back(w.iterations);
        converged.push_back(w.converged ? 1 : 0);
        j_initial.push_back(w.j_initial);
        j_final.push_back(w.j_final);
      });
  if (summary.windows == 0) throw data_error("assimilate: no usable windows");
  err_c /= summary.windows;
  err_u /= summary.windows;

  Container c;
  c.add_vector("mae_corrected", summary.mae_corrected);
  c.add_vector("mae_uncorrected", summary.mae_uncorrected);
  c.add_tensor3("err_corrected", err_c, s.grid_h, s.grid_w);
  c.add_tensor3("err_uncorrected", err_u, s.grid_h, s.grid_w);
  c.add_i64("origins", origins);
  c.add_i64("iterations", iterations);
  c.add_i64("converged", converged);
  c.add_vector("j_initial", Eigen::Map<Eigen::VectorXd>(j_initial.data(),
                                                        j_initial.size()));
  c.add_vector("j_final",
               Eigen::Map<Eigen::VectorXd>(j_final.data(), j_final.size()));
  c.add_i64("meta", {model.t_in, t_out, n_locations, summary.windows,
                     summary.failures});
  c.add_scalar("noise_std", noise_std);
  c.write(out);

  write_manifest(manifest, "assimilate", settings, inputs, {out}, notes);
  std::printf(
      "assimilate: %d windows (%d failed), overall MAE %.4f -> %.4f, '%s'\n",
      summary.windows, summary.failures, summary.mae_uncorrected.mean(),
      summary.mae_corrected.mean(), out.c_str());
  return summary.failures == 0 ? 0 : 4;
}

// ------------------------------------------------------------ evaluate

int cmd_evaluate(const std::string& campaign_path, const std::string& field,
                 const std::string& train_field, bool baselines, int lead,
                 const std::string& region_spec, const std::string& out_dir,
                 bool force) {
  require_file(campaign_path, "campaign");
  require_file(field, "field");
  if (baselines) require_file(train_field, "training field");
  std::filesystem::create_directories(out_dir);

  json settings = {{"baselines", baselines},
                   {"lead", lead},
                   {"regions", region_spec}};
  std::vector<std::string> input_paths = {campaign_path, field};
  if (baselines) input_paths.push_back(train_field);
  json inputs = hash_inputs(input_paths);
  const std::string manifest = out_dir + "/evaluate_manifest.json";
  if (!force && stage_current(manifest, settings, inputs)) {
    std::printf("evaluate: '%s' is up to date\n", out_dir.c_str());
    return 0;
  }

  Container camp = Container::read(campaign_path);
  auto meta = camp.get_i64("meta");
  if (meta.size() < 5) throw data_error("evaluate: bad campaign meta block");
  const int t_in = static_cast<int>(meta[0]);
  const int t_out = static_cast<int>(meta[1]);
  std::uint64_t gh = 0, gw = 0;
  Eigen::MatrixXd err_da = camp.get_tensor3("err_corrected", &gh, &gw);
  Eigen::MatrixXd err_em = camp.get_tensor3("err_uncorrected", &gh, &gw);
  auto origins = camp.get_i64("origins");
  if (origins.empty()) throw data_error("evaluate: campaign has no windows");

  FieldSeries s = FieldSeries::load(field);
  if (s.points() != err_da.cols() || s.grid_h != static_cast<int>(gh))
    throw data_error("evaluate: field grid does not match campaign");
  if (lead < 1 || lead > t_out)
    throw config_error("evaluate: --lead outside the forecast window");

  // Per-point, per-lead MAE fields for the baselines over the same
  // campaign windows.
  Eigen::MatrixXd err_pers = Eigen::MatrixXd::Zero(t_out, s.points());
  Eigen::MatrixXd err_climo = Eigen::MatrixXd::Zero(t_out, s.points());
  FieldSeries train_series;
  std::map<int, Eigen::VectorXd> climo_cache;
  if (baselines) train_series = FieldSeries::load(train_field);
  const long base = s.day_index.front();
  for (long day : origins) {
    const int o = static_cast<int>(day - base);
    if (o < 0 || o + t_in + t_out > s.steps())
      throw data_error("evaluate: campaign window outside the field series");
    Eigen::MatrixXd truth = s.data.middleRows(o + t_in, t_out);
    if (baselines) {
      Eigen::MatrixXd pers = persistence(s.data.middleRows(o, t_in), t_out);
      err_pers += (pers - truth).cwiseAbs();
      for (int d = 0; d < t_out; ++d) {
        const int doy = static_cast<int>((day + t_in + d) % 365);
        auto it = climo_cache.find(doy);
        if (it == climo_cache.end())
          it = climo_cache.emplace(doy, climatology(train_series, doy)).first;
        err_climo.row(d) += (it->second.transpose() - truth.row(d)).cwiseAbs();
      }
    }
  }
  const double n_windows = static_cast<double>(origins.size());
  err_pers /= n_windows;
  err_climo /= n_windows;

  // Per-lead MAE table.
  struct Method {
    std::string name;
    const Eigen::MatrixXd* err;
  };
  std::vector<Method> methods = {{"emulator", &err_em},
                                 {"emulator_da", &err_da}};
  if (baselines) {
    methods.push_back({"climatology", &err_climo});
    methods.push_back({"persistence", &err_pers});
  }

  const std::string mae_path = out_dir + "/mae.csv";
  {
    std::ofstream os(mae_path);
    if (!os) throw data_error("evaluate: cannot write '" + mae_path + "'");
    os << "method,lead_day,mae\n";
    os.precision(17);
    for (const auto& m : methods)
      for (int d = 0; d < t_out; ++d)
        os << m.name << ',' << d + 1 << ',' << m.err->row(d).mean() << '\n';
  }
  std::vector<std::string> outputs = {mae_path};

  // Improvement-over-climatology maps (positive = better than
  // climatology), full rank-3 container plus a CSV at the chosen lead.
  if (baselines) {
    Container imp;
    for (const auto& m : methods) {
      if (m.name == "climatology") continue;
      Eigen::MatrixXd map =
          improvement_map(*m.err, err_climo, ImprovementMode::kMae);
      imp.add_tensor3(m.name, map, gh, gw);
      std::string csv =
          out_dir + "/improvement_" + m.name + "_lead" + std::to_string(lead) +
          ".csv";
      std::ofstream os(csv);
      if (!os) throw data_error("evaluate: cannot write '" + csv + "'");
      os << "row,col,value\n";
      os.precision(17);
      for (int r = 0; r < s.grid_h; ++r)
        for (int col = 0; col < s.grid_w; ++col)
          os << r << ',' << col << ','
             << map(lead - 1, r * s.grid_w + col) << '\n';
      outputs.push_back(csv);
    }
    const std::string imp_path = out_dir + "/improvement.rvar";
    imp.write(imp_path);
    outputs.push_back(imp_path);
  }

  // Regional summary (single campaign = single ensemble member).
  const std::string regional_path = out_dir + "/regional.csv";
  {
    std::vector<Region> regions = parse_regions(region_spec, s.grid_h,
                                                s.grid_w);
    std::ofstream os(regional_path);
    if (!os) throw data_error("evaluate: cannot write '" + regional_path + "'");
    os << "region,lead_day,method,mean,lo,hi\n";
    os.precision(17);
    for (const auto& m : methods) {
      auto rows = regional_summary({*m.err}, regions, s.grid_h, s.grid_w);
      for (const auto& r : rows)
        os << r.region << ',' << r.lead_day << ',' << m.name << ',' << r.mean
           << ',' << r.lo << ',' << r.hi << '\n';
    }
  }
  outputs.push_back(regional_path);

  write_manifest(manifest, "evaluate", settings, inputs, outputs);
  std::printf("evaluate: %zu methods over %d leads -> '%s'\n", methods.size(),
              t_out, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order forecast emulation and variational correction"};
  app.set_version_flag("--version", std::string("rvar ") + kVersion);
  app.require_subcommand(1);
  bool force = false;
  app.add_flag("--force", force, "re-run stages even when up to date");

  // generate
  auto* g = app.add_subcommand("generate", "synthesize a field archive");
  add_config_flag(g);
  SyntheticConfig gen_cfg;
  std::string wave_spec = "8:2:10:0.5,5:3:8:0.75,3:5:6:1";
  std::string gen_out = "field.rvar";
  g->add_option("--grid-h", gen_cfg.grid_h, "grid rows");
  g->add_option("--grid-w", gen_cfg.grid_w, "grid columns");
  g->add_option("--n-days", gen_cfg.n_days, "days to generate");
  g->add_option("--base-level", gen_cfg.base_level, "mean field level");
  g->add_option("--seasonal-amplitude", gen_cfg.seasonal_amplitude,
                "seasonal cycle amplitude");
  g->add_option("--seasonal-period", gen_cfg.seasonal_period,
                "seasonal period in days");
  g->add_option("--noise-std", gen_cfg.noise_std, "white noise level");
  g->add_option("--seed", gen_cfg.seed, "RNG seed");
  g->add_option("--waves", wave_spec,
                "wave list amp:wavenumber:width:speed[,...], or 'none'");
  g->add_option("-o,--out", gen_out, "output field file");

  // pod
  auto* p = app.add_subcommand("pod", "fit a POD basis");
  add_config_flag(p);
  std::string pod_field, pod_out = "basis.rvar", pod_coeffs;
  int pod_k = 5;
  p->add_option("--field", pod_field, "input field file")->required();
  p->add_option("--k", pod_k, "modes to retain");
  p->add_option("-o,--out", pod_out, "output basis file");
  p->add_option("--coeffs-out", pod_coeffs, "optional coefficient file");

  // train
  auto* t = app.add_subcommand("train", "train the forecast emulator");
  add_config_flag(t);
  std::string train_field, train_dir = ".";
  int train_k = 5, train_t_in = 14;
  TrainOpts train_opts;
  t->add_option("--field", train_field, "input field file")->required();
  t->add_option("--k", train_k, "POD modes");
  t->add_option("--t-in", train_t_in, "input window length");
  t->add_option("--out-dir", train_dir, "output directory");
  train_opts.attach(t);

  // grid-search
  auto* gs = app.add_subcommand("grid-search",
                                "sweep (t_in, k) and rank by validation loss");
  add_config_flag(gs);
  std::string gs_field, gs_dir = ".", gs_t_in = "7,14,28,42", gs_k = "5";
  TrainOpts gs_opts;
  gs->add_option("--field", gs_field, "input field file")->required();
  gs->add_option("--t-in-grid", gs_t_in, "comma-separated input lengths");
  gs->add_option("--k-grid", gs_k, "comma-separated mode counts");
  gs->add_option("--out-dir", gs_dir, "output directory");
  gs_opts.attach(gs);

  // forecast
  auto* f = app.add_subcommand("forecast", "run one emulator forecast");
  add_config_flag(f);
  std::string f_model, f_basis, f_field, f_out = "forecast.rvar";
  int f_origin = 0;
  f->add_option("--model", f_model, "model checkpoint")->required();
  f->add_option("--basis", f_basis, "basis file")->required();
  f->add_option("--field", f_field, "field file")->required();
  f->add_option("--origin", f_origin, "input window start row");
  f->add_option("-o,--out", f_out, "output forecast file");

  // assimilate
  auto* a = app.add_subcommand("assimilate",
                               "campaign of variational corrections");
  add_config_flag(a);
  std::string a_model, a_basis, a_field, a_out = "campaign.rvar";
  int a_nloc = -1;
  double a_noise = 0.0;
  std::uint64_t a_seed = 0;
  bool a_fixed = false;
  DaConfig a_da;
  a->add_option("--model", a_model, "model checkpoint")->required();
  a->add_option("--basis", a_basis, "basis file")->required();
  a->add_option("--field", a_field, "truth field file")->required();
  a->add_option("--n-locations", a_nloc,
                "observed grid points per window (default: scaled density)");
  a->add_option("--noise-std", a_noise, "observation noise");
  a->add_option("--seed", a_seed, "RNG seed");
  a->add_flag("--fixed-locations", a_fixed,
              "hold one sensor draw for the whole campaign");
  a->add_option("--b0", a_da.b0_inv_scale, "background term weight");
  a->add_option("--r", a_da.r_inv_scale, "data term weight");
  a->add_flag("!--no-misfit-norm", a_da.misfit_normalization,
              "disable dividing the data term by m * t_out");
  a->add_option("--max-iters", a_da.max_iters, "optimizer iteration cap");
  a->add_option("--grad-tol", a_da.grad_tol, "gradient tolerance");
  a->add_option("--step-tol", a_da.step_tol, "step tolerance");
  a->add_option("-o,--out", a_out, "output campaign file");

  // evaluate
  auto* e = app.add_subcommand("evaluate", "metrics and comparison maps");
  add_config_flag(e);
  std::string e_campaign, e_field, e_train, e_regions = "all",
              e_dir = "evaluation";
  bool e_no_baselines = false;
  int e_lead = 1;
  e->add_option("--campaign", e_campaign, "campaign file")->required();
  e->add_option("--field", e_field, "truth field file")->required();
  e->add_option("--train-field", e_train,
                "training field file (for climatology)");
  e->add_flag("--no-baselines", e_no_baselines,
              "skip climatology and persistence");
  e->add_option("--lead", e_lead, "lead day for improvement map CSVs");
  e->add_option("--regions", e_regions,
                "regions name:row0:row1:col0:col1[;...] or 'all'");
  e->add_option("--out-dir", e_dir, "output directory");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    const std::string cfg_path = extract_config_path(args);
    if (!cfg_path.empty()) inject_config(app, args, cfg_path);
    std::reverse(args.begin(), args.end());  // CLI11 consumes back-to-front
    app.parse(std::move(args));
    if (g->parsed()) return cmd_generate(gen_cfg, wave_spec, gen_out, force);
    if (p->parsed()) return cmd_pod(pod_field, pod_k, pod_out, pod_coeffs, force);
    if (t->parsed())
      return cmd_train(train_field, train_k, train_t_in, train_opts, train_dir,
                       force);
    if (gs->parsed())
      return cmd_grid_search(gs_field, gs_t_in, gs_k, gs_opts, gs_dir, force);
    if (f->parsed())
      return cmd_forecast(f_model, f_basis, f_field, f_origin, f_out, force);
    if (a->parsed())
      return cmd_assimilate(a_model, a_basis, a_field, a_nloc, a_noise, a_seed,
                            a_fixed, a_da, a_out, force);
    if (e->parsed())
      return cmd_evaluate(e_campaign, e_field, e_train, !e_no_baselines,
                          e_lead, e_regions, e_dir, force);
    return 2;
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  } catch (const config_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const numerical_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 4;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 3;
  }
}
