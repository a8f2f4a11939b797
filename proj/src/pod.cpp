// SPDX-License-Identifier: Apache-2.0
#include "rvar/pod.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

#include "rvar/container.hpp"
#include "rvar/errors.hpp"

namespace rvar {

namespace {

// Replace columns whose singular value is numerically zero with
// canonical vectors orthogonalized against the columns already placed,
// so the basis stays orthonormal for rank-deficient snapshot sets.
void complete_orthonormal(Eigen::MatrixXd& u, int from_col) {
  const long n = u.rows();
  long next_canonical = 0;
  for (int j = from_col; j < u.cols(); ++j) {
    while (true) {
      if (next_canonical >= n)
        throw numerical_error("pod: cannot complete orthonormal basis");
      Eigen::VectorXd cand = Eigen::VectorXd::Zero(n);
      cand(next_canonical++) = 1.0;
      for (int i = 0; i < j; ++i) cand -= u.col(i).dot(cand) * u.col(i);
      double norm = cand.norm();
      if (norm > 0.5) {
        u.col(j) = cand / norm;
        break;
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd NormStats::normalize(const Eigen::MatrixXd& coeffs) const {
  return (coeffs.rowwise() - mu.transpose()).array().rowwise() /
         sd.transpose().array();
}

Eigen::MatrixXd NormStats::denormalize(const Eigen::MatrixXd& coeffs) const {
  return (coeffs.array().rowwise() * sd.transpose().array()).matrix().rowwise() +
         mu.transpose();
}

Eigen::VectorXd NormStats::normalize_one(const Eigen::VectorXd& c) const {
  return (c - mu).cwiseQuotient(sd);
}

Eigen::VectorXd NormStats::denormalize_one(const Eigen::VectorXd& c) const {
  return c.cwiseProduct(sd) + mu;
}

NormStats NormStats::fit(const Eigen::MatrixXd& coeffs) {
  if (coeffs.rows() == 0) throw data_error("norm: empty coefficient series");
  NormStats s;
  s.mu = coeffs.colwise().mean();
  Eigen::MatrixXd centered = coeffs.rowwise() - s.mu.transpose();
  s.sd = (centered.array().square().colwise().mean()).sqrt();
  for (long i = 0; i < s.sd.size(); ++i)
    if (s.sd(i) < 1e-12) s.sd(i) = 1.0;
  return s;
}

NormStats NormStats::head(int k) const {
  NormStats s;
  s.mu = mu.head(k);
  s.sd = sd.head(k);
  return s;
}

PodBasis PodBasis::head(int k_new) const {
  if (k_new < 1 || k_new > k) throw data_error("pod: head k out of range");
  PodBasis b;
  b.modes = modes.leftCols(k_new);
  b.singular_values = singular_values;
  b.temporal_mean = temporal_mean;
  b.n_snapshots = n_snapshots;
  b.k = k_new;
  return b;
}

PodBasis compute_pod(const FieldSeries& series, int k) {
  series.validate();
  const int m = series.steps();
  const long n = series.points();
  if (m < 2) throw data_error("pod: need at least 2 snapshots");
  if (k < 1 || k > m) throw data_error("pod: k out of range [1, M]");

  PodBasis basis;
  basis.temporal_mean = series.data.colwise().mean();
  // X is [N x M]: one centered snapshot per column.
  Eigen::MatrixXd x =
      (series.data.rowwise() - basis.temporal_mean.transpose()).transpose();

  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  if (n > 4L * m) {
    // Economy route via the M x M Gram matrix.
    Eigen::MatrixXd gram = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    // Eigen sorts ascending; flip to descending.
    Eigen::VectorXd lambda = eig.eigenvalues().reverse();
    Eigen::MatrixXd v = eig.eigenvectors().rowwise().reverse();
    sigma = lambda.cwiseMax(0.0).cwiseSqrt();
    u.resize(n, k);
    double tol = sigma(0) > 0 ? sigma(0) * 1e-10 : 0.0;
    int rank_k = 0;
    while (rank_k < k && sigma(rank_k) > tol) ++rank_k;
    u.leftCols(rank_k) = x * v.leftCols(rank_k);
    for (int j = 0; j < rank_k; ++j) u.col(j) /= sigma(j);
    // Polish: Gram-route vectors lose orthogonality for small sigma.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(u.leftCols(rank_k));
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank_k);
    Eigen::MatrixXd r =
        qr.matrixQR().topRows(rank_k).triangularView<Eigen::Upper>();
    for (int j = 0; j < rank_k; ++j)
      u.col(j) = (r(j, j) < 0 ? -1.0 : 1.0) * q.col(j);
    complete_orthonormal(u, rank_k);
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x,
                                       Eigen::ComputeThinU | Eigen::ComputeThinV);
    sigma = svd.singularValues();
    u = svd.matrixU().leftCols(k);
  }

  basis.modes = u;
  basis.singular_values = sigma;
  basis.n_snapshots = m;
  basis.k = k;
  return basis;
}

Eigen::VectorXd project(const PodBasis& basis, const Eigen::VectorXd& state) {
  if (state.size() != basis.modes.rows())
    throw data_error("pod: project dimension mismatch");
  return basis.modes.transpose() * (state - basis.temporal_mean);
}

Eigen::VectorXd reconstruct(const PodBasis& basis, const Eigen::VectorXd& r) {
  if (r.size() != basis.k) throw data_error("pod: reconstruct dimension mismatch");
  return basis.temporal_mean + basis.modes * r;
}

Eigen::MatrixXd project_series(const PodBasis& basis, const FieldSeries& s) {
  if (s.points() != basis.points())
    throw data_error("pod: series dimension mismatch");
  return (s.data.rowwise() - basis.temporal_mean.transpose()) * basis.modes;
}

Eigen::MatrixXd reconstruct_series(const PodBasis& basis,
                                   const Eigen::MatrixXd& coeffs) {
  if (coeffs.cols() != basis.k)
    throw data_error("pod: coefficient width mismatch");
  return (coeffs * basis.modes.transpose()).rowwise() +
         basis.temporal_mean.transpose();
}

double truncation_error(const PodBasis& basis, const FieldSeries& series,
                        int k_used) {
  if (series.points() != basis.points())
    throw data_error("pod: truncation_error dimension mismatch");
  if (k_used < 0) k_used = basis.k;
  if (k_used > basis.k) throw data_error("pod: k_used exceeds stored modes");
  Eigen::MatrixXd centered =
      series.data.rowwise() - basis.temporal_mean.transpose();
  if (k_used == 0) return centered.squaredNorm();
  Eigen::MatrixXd coeffs = centered * basis.modes.leftCols(k_used);
  Eigen::MatrixXd residual =
      centered - coeffs * basis.modes.leftCols(k_used).transpose();
  return residual.squaredNorm();
}

void PodBasis::save(const std::string& path, const NormStats* norm) const {
  Container c;
  c.add_matrix("modes", modes);
  c.add_vector("sigma", singular_values);
  c.add_vector("mean", temporal_mean);
  if (norm) {
    c.add_vector("norm_mu", norm->mu);
    c.add_vector("norm_sd", norm->sd);
  }
  c.write(path);
}

PodBasis PodBasis::load(const std::string& path, NormStats* norm) {
  Container c = Container::read(path);
  PodBasis b;
  b.modes = c.get_matrix("modes");
  b.singular_values = c.get_vector("sigma");
  b.temporal_mean = c.get_vector("mean");
  b.n_snapshots = static_cast<int>(b.singular_values.size());
  b.k = static_cast<int>(b.modes.cols());
  if (norm) {
    if (!c.has("norm_mu"))
      throw data_error("pod: basis file lacks normalization blocks");
    norm->mu = c.get_vector("norm_mu");
    norm->sd = c.get_vector("norm_sd");
  }
  return b;
}

}  // namespace rvar
