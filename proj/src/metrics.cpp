// SPDX-License-Identifier: Apache-2.0
#include "rvar/metrics.hpp"

#include "rvar/errors.hpp"

namespace rvar {

MaeResult mae(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
    throw data_error("metrics: mae shape mismatch");
  MaeResult r;
  r.per_lead = (pred - truth).cwiseAbs().rowwise().mean();
  r.overall = r.per_lead.mean();
  return r;
}

std::optional<double> cosine_similarity(const Eigen::VectorXd& pred,
                                        const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size())
    throw data_error("metrics: cosine shape mismatch");
  const double np = pred.norm();
  const double nt = truth.norm();
  if (np == 0.0 || nt == 0.0) return std::nullopt;
  return pred.dot(truth) / (np * nt);
}

Eigen::MatrixXd improvement_map(const Eigen::MatrixXd& method_metric,
                                const Eigen::MatrixXd& climatology_metric,
                                ImprovementMode mode) {
  if (method_metric.rows() != climatology_metric.rows() ||
      method_metric.cols() != climatology_metric.cols())
    throw data_error("metrics: improvement shape mismatch");
  // Similarity: higher is better, so method - climatology.
  // MAE: lower is better, so climatology - method.
  return mode == ImprovementMode::kSimilarity
             ? (method_metric - climatology_metric).eval()
             : (climatology_metric - method_metric).eval();
}

std::vector<RegionalRow> regional_summary(
    const std::vector<Eigen::MatrixXd>& members,
    const std::vector<Region>& regions, int grid_h, int grid_w) {
  if (members.empty()) throw config_error("metrics: no ensemble members");
  if (regions.empty()) throw config_error("metrics: no regions");
  const long t_lead = members[0].rows();
  for (const auto& m : members)
    if (m.rows() != t_lead || m.cols() != static_cast<long>(grid_h) * grid_w)
      throw data_error("metrics: member shape mismatch");
  for (const auto& r : regions)
    if (r.row_begin < 0 || r.row_end > grid_h || r.row_begin >= r.row_end ||
        r.col_begin < 0 || r.col_end > grid_w || r.col_begin >= r.col_end)
      throw config_error("metrics: region '" + r.name + "' out of grid or empty");

  std::vector<RegionalRow> rows;
  for (const auto& region : regions) {
    for (long d = 0; d < t_lead; ++d) {
      double lo = 0.0, hi = 0.0, sum = 0.0;
      for (std::size_t m = 0; m < members.size(); ++m) {
        double acc = 0.0;
        int count = 0;
        for (int y = region.row_begin; y < region.row_end; ++y)
          for (int x = region.col_begin; x < region.col_end; ++x) {
            acc += members[m](d, static_cast<long>(y) * grid_w + x);
            ++count;
          }
        const double mean = acc / count;
        sum += mean;
        if (m == 0) {
          lo = hi = mean;
        } else {
          lo = std::min(lo, mean);
          hi = std::max(hi, mean);
        }
      }
      rows.push_back({region.name, static_cast<int>(d) + 1,
                      sum / static_cast<double>(members.size()), lo, hi});
    }
  }
  return rows;
}

}  // namespace rvar
