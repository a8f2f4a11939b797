// SPDX-License-Identifier: Apache-2.0
#include "rvar/lstm.hpp"

#include <random>

#include "rvar/container.hpp"
#include "rvar/errors.hpp"

namespace rvar {

namespace {

Eigen::MatrixXd glorot(int rows, int cols, std::mt19937_64& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

LstmCellParams init_cell(int input_size, int units, std::mt19937_64& rng,
                         double forget_bias_offset) {
  LstmCellParams p;
  p.units = units;
  p.input_size = input_size;
  p.w_gates = glorot(4 * units, input_size + units, rng);
  p.b_gates = Eigen::VectorXd::Zero(4 * units);
  p.b_gates.segment(units, units).array() += forget_bias_offset;
  return p;
}

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

LatentState LatentState::zero(int units, int batch) {
  return {Eigen::MatrixXd::Zero(units, batch),
          Eigen::MatrixXd::Zero(units, batch)};
}

SurrogateModel SurrogateModel::init(int k, int units, int t_in, int t_out,
                                    std::uint64_t seed, int layers,
                                    double forget_bias_offset) {
  if (k < 1 || units < 1 || t_in < 1 || t_out < 1 || layers < 1)
    throw data_error("lstm: invalid architecture sizes");
  std::mt19937_64 rng(seed);
  SurrogateModel m;
  m.k = k;
  m.units = units;
  m.t_in = t_in;
  m.t_out = t_out;
  for (int l = 0; l < layers; ++l)
    m.encoder.push_back(
        init_cell(l == 0 ? k : units, units, rng, forget_bias_offset));
  for (int l = 0; l < layers; ++l)
    m.decoder.push_back(
        init_cell(l == 0 ? units : units, units, rng, forget_bias_offset));
  m.out_w1 = glorot(units, units, rng);
  m.out_b1 = Eigen::VectorXd::Zero(units);
  m.out_w2 = glorot(k, units, rng);
  m.out_b2 = Eigen::VectorXd::Zero(k);
  m.norm.mu = Eigen::VectorXd::Zero(k);
  m.norm.sd = Eigen::VectorXd::Ones(k);
  return m;
}

std::vector<Eigen::Map<Eigen::VectorXd>> SurrogateModel::param_views() {
  std::vector<Eigen::Map<Eigen::VectorXd>> v;
  auto push = [&v](Eigen::MatrixXd& m) {
    v.emplace_back(m.data(), m.size());
  };
  auto push_vec = [&v](Eigen::VectorXd& m) {
    v.emplace_back(m.data(), m.size());
  };
  for (auto& c : encoder) {
    push(c.w_gates);
    push_vec(c.b_gates);
  }
  for (auto& c : decoder) {
    push(c.w_gates);
    push_vec(c.b_gates);
  }
  push(out_w1);
  push_vec(out_b1);
  push(out_w2);
  push_vec(out_b2);
  return v;
}

std::vector<std::string> SurrogateModel::param_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    names.push_back("enc" + std::to_string(l) + "_w");
    names.push_back("enc" + std::to_string(l) + "_b");
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    names.push_back("dec" + std::to_string(l) + "_w");
    names.push_back("dec" + std::to_string(l) + "_b");
  }
  names.insert(names.end(), {"out_w1", "out_b1", "out_w2", "out_b2"});
  return names;
}

void SurrogateModel::save(const std::string& path) const {
  Container c;
  Eigen::VectorXd meta(5);
  meta << t_in, t_out, k, units, static_cast<double>(encoder.size());
  c.add_vector("meta", meta);
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    c.add_matrix("enc" + std::to_string(l) + "_w", encoder[l].w_gates);
    c.add_vector("enc" + std::to_string(l) + "_b", encoder[l].b_gates);
  }
  for (std::size_t l = 0; l < decoder.size(); ++l) {
    c.add_matrix("dec" + std::to_string(l) + "_w", decoder[l].w_gates);
    c.add_vector("dec" + std::to_string(l) + "_b", decoder[l].b_gates);
  }
  c.add_matrix("out_w1", out_w1);
  c.add_vector("out_b1", out_b1);
  c.add_matrix("out_w2", out_w2);
  c.add_vector("out_b2", out_b2);
  c.add_vector("norm_mu", norm.mu);
  c.add_vector("norm_sd", norm.sd);
  c.write(path);
}

SurrogateModel SurrogateModel::load(const std::string& path) {
  Container c = Container::read(path);
  Eigen::VectorXd meta = c.get_vector("meta");
  if (meta.size() != 5) throw data_error("lstm: bad model meta block");
  SurrogateModel m;
  m.t_in = static_cast<int>(meta(0));
  m.t_out = static_cast<int>(meta(1));
  m.k = static_cast<int>(meta(2));
  m.units = static_cast<int>(meta(3));
  int layers = static_cast<int>(meta(4));
  for (int l = 0; l < layers; ++l) {
    LstmCellParams p;
    p.w_gates = c.get_matrix("enc" + std::to_string(l) + "_w");
    p.b_gates = c.get_vector("enc" + std::to_string(l) + "_b");
    p.units = m.units;
    p.input_size = static_cast<int>(p.w_gates.cols()) - m.units;
    m.encoder.push_back(std::move(p));
  }
  for (int l = 0; l < layers; ++l) {
    LstmCellParams p;
    p.w_gates = c.get_matrix("dec" + std::to_string(l) + "_w");
    p.b_gates = c.get_vector("dec" + std::to_string(l) + "_b");
    p.units = m.units;
    p.input_size = static_cast<int>(p.w_gates.cols()) - m.units;
    m.decoder.push_back(std::move(p));
  }
  m.out_w1 = c.get_matrix("out_w1");
  m.out_b1 = c.get_vector("out_b1");
  m.out_w2 = c.get_matrix("out_w2");
  m.out_b2 = c.get_vector("out_b2");
  m.norm.mu = c.get_vector("norm_mu");
  m.norm.sd = c.get_vector("norm_sd");
  return m;
}

LatentState cell_step(const LstmCellParams& params, const Eigen::MatrixXd& x,
                      const LatentState& state) {
  const int u = params.units;
  if (x.rows() != params.input_size || state.h.rows() != u ||
      state.c.rows() != u || x.cols() != state.h.cols())
    throw data_error("lstm: cell_step shape mismatch");
  Eigen::MatrixXd xh(x.rows() + u, x.cols());
  xh.topRows(x.rows()) = x;
  xh.bottomRows(u) = state.h;
  Eigen::MatrixXd z = (params.w_gates * xh).colwise() + params.b_gates;
  Eigen::MatrixXd i = sigmoid(z.topRows(u));
  Eigen::MatrixXd f = sigmoid(z.middleRows(u, u));
  Eigen::MatrixXd g = z.middleRows(2 * u, u).array().tanh().matrix();
  Eigen::MatrixXd o = sigmoid(z.bottomRows(u));
  LatentState next;
  next.c = f.cwiseProduct(state.c) + i.cwiseProduct(g);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

std::vector<LatentState> encode(const SurrogateModel& model,
                                const Eigen::MatrixXd& window) {
  if (window.rows() != model.t_in || window.cols() != model.k)
    throw data_error("lstm: encode window shape mismatch");
  std::vector<LatentState> states;
  for (const auto& cell : model.encoder)
    states.push_back(LatentState::zero(cell.units));
  for (int t = 0; t < model.t_in; ++t) {
    Eigen::MatrixXd x = window.row(t).transpose();
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
      states[l] = cell_step(model.encoder[l], x, states[l]);
      x = states[l].h;
    }
  }
  return states;
}

Eigen::MatrixXd decode(const SurrogateModel& model,
                       const Eigen::MatrixXd& latent_h, int t_out) {
  if (latent_h.rows() != model.units)
    throw data_error("lstm: decode latent shape mismatch");
  std::vector<LatentState> states;
  for (const auto& cell : model.decoder)
    states.push_back(LatentState::zero(cell.units, static_cast<int>(latent_h.cols())));
  Eigen::MatrixXd out(t_out, model.k);
  for (int t = 0; t < t_out; ++t) {
    Eigen::MatrixXd x = latent_h;
    for (std::size_t l = 0; l < model.decoder.size(); ++l) {
      states[l] = cell_step(model.decoder[l], x, states[l]);
      x = states[l].h;
    }
    Eigen::MatrixXd hidden =
        ((model.out_w1 * x).colwise() + model.out_b1).cwiseMax(0.0);
    out.row(t) = (((model.out_w2 * hidden).colwise() + model.out_b2).col(0))
                     .transpose();
  }
  return out;
}

Forecast forecast(const SurrogateModel& model, const PodBasis& basis,
                  const Eigen::MatrixXd& raw_window) {
  if (basis.k != model.k) throw data_error("lstm: basis/model k mismatch");
  Eigen::MatrixXd window_norm = model.norm.normalize(raw_window);
  auto latent = encode(model, window_norm);
  Eigen::MatrixXd out_norm = decode(model, latent.back().h, model.t_out);
  Forecast f;
  f.reduced = model.norm.denormalize(out_norm);
  f.full = reconstruct_series(basis, f.reduced);
  return f;
}

Forecast forecast_full(const SurrogateModel& model, const PodBasis& basis,
                       const Eigen::MatrixXd& full_window) {
  if (full_window.cols() != basis.points())
    throw data_error("lstm: full window width mismatch");
  Eigen::MatrixXd coeffs =
      (full_window.rowwise() - basis.temporal_mean.transpose()) * basis.modes;
  return forecast(model, basis, coeffs);
}

StagedModel stage_model(ad::Tape& tape, const SurrogateModel& model,
                        bool as_leaves) {
  auto put = [&](const Eigen::MatrixXd& m) {
    return as_leaves ? tape.leaf(m) : tape.constant(m);
  };
  StagedModel s;
  for (const auto& c : model.encoder)
    s.encoder.push_back({put(c.w_gates), put(c.b_gates)});
  for (const auto& c : model.decoder)
    s.decoder.push_back({put(c.w_gates), put(c.b_gates)});
  s.out_w1 = put(model.out_w1);
  s.out_b1 = put(model.out_b1);
  s.out_w2 = put(model.out_w2);
  s.out_b2 = put(model.out_b2);
  return s;
}

namespace {

struct StagedState {
  ad::Var h, c;
};

StagedState staged_cell_step(ad::Tape& tape, const StagedCell& cell, int units,
                             ad::Var x, const StagedState& state) {
  ad::Var xh = tape.concat_rows(x, state.h);
  ad::Var z = tape.add(tape.matmul(cell.w, xh), cell.b);
  ad::Var i = tape.sigmoid(tape.slice_rows(z, 0, units));
  ad::Var f = tape.sigmoid(tape.slice_rows(z, units, units));
  ad::Var g = tape.tanh(tape.slice_rows(z, 2 * units, units));
  ad::Var o = tape.sigmoid(tape.slice_rows(z, 3 * units, units));
  StagedState next;
  next.c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
  next.h = tape.mul(o, tape.tanh(next.c));
  return next;
}

}  // namespace

std::vector<ad::Var> staged_forward(ad::Tape& tape, const StagedModel& staged,
                                    const SurrogateModel& model,
                                    const std::vector<ad::Var>& inputs,
                                    int t_out) {
  if (static_cast<int>(inputs.size()) != model.t_in)
    throw data_error("lstm: staged_forward window length mismatch");
  const int u = model.units;
  const long batch = tape.value(inputs[0]).cols();
  ad::Var zero_state =
      tape.constant(Eigen::MatrixXd::Zero(u, batch));

  std::vector<StagedState> enc_states(model.encoder.size(),
                                      {zero_state, zero_state});
  for (int t = 0; t < model.t_in; ++t) {
    ad::Var x = inputs[t];
    for (std::size_t l = 0; l < staged.encoder.size(); ++l) {
      enc_states[l] =
          staged_cell_step(tape, staged.encoder[l], u, x, enc_states[l]);
      x = enc_states[l].h;
    }
  }
  ad::Var latent = enc_states.back().h;

  std::vector<StagedState> dec_states(model.decoder.size(),
                                      {zero_state, zero_state});
  std::vector<ad::Var> outputs;
  for (int t = 0; t < t_out; ++t) {
    ad::Var x = latent;
    for (std::size_t l = 0; l < staged.decoder.size(); ++l) {
      dec_states[l] =
          staged_cell_step(tape, staged.decoder[l], u, x, dec_states[l]);
      x = dec_states[l].h;
    }
    ad::Var hidden =
        tape.relu(tape.add(tape.matmul(staged.out_w1, x), staged.out_b1));
    outputs.push_back(
        tape.add(tape.matmul(staged.out_w2, hidden), staged.out_b2));
  }
  return outputs;
}

Eigen::MatrixXd grad_wrt_input(
    const SurrogateModel& model, const Eigen::MatrixXd& window_norm,
    const std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&,
                                const std::vector<ad::Var>&)>& objective,
    double* objective_value) {
  if (window_norm.rows() != model.t_in || window_norm.cols() != model.k)
    throw data_error("lstm: grad_wrt_input window shape mismatch");
  ad::Tape tape;
  std::vector<ad::Var> inputs;
  for (int t = 0; t < model.t_in; ++t)
    inputs.push_back(tape.leaf(window_norm.row(t).transpose()));
  StagedModel staged = stage_model(tape, model, false);
  std::vector<ad::Var> outputs =
      staged_forward(tape, staged, model, inputs, model.t_out);
  ad::Var obj = objective(tape, inputs, outputs);
  if (objective_value) *objective_value = tape.value(obj)(0, 0);
  tape.backward(obj);
  Eigen::MatrixXd grad(model.t_in, model.k);
  for (int t = 0; t < model.t_in; ++t)
    grad.row(t) = tape.grad(inputs[t]).transpose();
  return grad;
}

}  // namespace rvar
