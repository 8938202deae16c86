#include "crt/clanova.hpp"

#include "crt/errors.hpp"
#include "linalg.hpp"

namespace crt {

ClusterMeansTable aggregate(const TrialDataset& data) {
  data.validate_structure();
  ClusterMeansTable table;
  table.p = data.num_covariates();
  table.rows.reserve(data.num_clusters());
  const auto p = static_cast<Eigen::Index>(table.p);
  for (const auto& c : data.clusters) {
    ClusterMeansRow row;
    row.n = c.size();
    row.treatment = c.treatment;
    const double n = static_cast<double>(row.n);
    detail::CompensatedSum ys;
    for (double y : c.outcomes) ys.add(y);
    row.ybar = ys.value() / n;
    row.xbar.resize(p);
    for (Eigen::Index t = 0; t < p; ++t) {
      detail::CompensatedSum xs;
      for (Eigen::Index j = 0; j < c.covariates.rows(); ++j) xs.add(c.covariates(j, t));
      row.xbar(t) = xs.value() / n;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

ClusterAncovaFit fit_cluster_ancova(const TrialDataset& data, ClusterVariance variance,
                                    double level) {
  data.validate();
  const ClusterMeansTable table = aggregate(data);
  const auto m = static_cast<Eigen::Index>(table.rows.size());
  const auto p = static_cast<Eigen::Index>(table.p);
  const Eigen::Index k = p + 2;
  if (m <= k) {
    throw DegreesOfFreedom("cluster-level ANCOVA needs more clusters than parameters");
  }

  Eigen::MatrixXd z(m, k);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    z(i, 0) = 1.0;
    z(i, 1) = row.treatment;
    if (p > 0) z.row(i).tail(p) = row.xbar.transpose();
    y(i) = row.ybar;
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() < k) throw SingularDesign("cluster-level design is rank deficient");
  const Eigen::MatrixXd ztz_inv =
      detail::invert_spd(z.transpose() * z, "cluster-level design is rank deficient");

  ClusterAncovaFit out;
  out.alpha = qr.solve(y);
  out.residuals = y - z * out.alpha;
  if (variance == ClusterVariance::Classical) {
    const double s2 = out.residuals.squaredNorm() / static_cast<double>(m - k);
    out.covariance = s2 * ztz_inv;
  } else {
    const Eigen::MatrixXd meat =
        z.transpose() * out.residuals.array().square().matrix().asDiagonal() * z;
    out.covariance = ztz_inv * meat * ztz_inv;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  }
  out.report = make_report(out.alpha(1), std::sqrt(out.covariance(1, 1)), level,
                           VarianceMethod::ClusterOLS,
                           variance == ClusterVariance::Classical ? "cluster-level ANCOVA"
                                                                  : "cluster-level ANCOVA (HC0)");
  return out;
}

namespace {

// Sample covariance blocks of (x, y) rows: returns (Sxx, Sxy).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> cross_moments(const Eigen::MatrixXd& x,
                                                          const Eigen::VectorXd& y) {
  const Eigen::RowVectorXd xm = x.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - xm;
  const Eigen::VectorXd yc = y.array() - ym;
  const double denom = static_cast<double>(x.rows() - 1);
  return {xc.transpose() * xc / denom, xc.transpose() * yc / denom};
}

}  // namespace

Eigen::VectorXd projection_gap(const TrialDataset& data) {
  data.validate_structure();
  const auto p = static_cast<Eigen::Index>(data.num_covariates());
  const auto m = static_cast<Eigen::Index>(data.num_clusters());
  if (p == 0) throw InvalidArgument("projection_gap needs at least one covariate");
  if (m < p + 2) throw DegreesOfFreedom("projection_gap needs m >= p + 2");

  const ClusterMeansTable table = aggregate(data);
  Eigen::MatrixXd xbar(m, p);
  Eigen::VectorXd ybar(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    xbar.row(i) = table.rows[static_cast<std::size_t>(i)].xbar.transpose();
    ybar(i) = table.rows[static_cast<std::size_t>(i)].ybar;
  }

  const auto n_total = static_cast<Eigen::Index>(data.num_individuals());
  Eigen::MatrixXd x(n_total, p);
  Eigen::VectorXd y(n_total);
  Eigen::Index r = 0;
  for (const auto& c : data.clusters) {
    const auto n = static_cast<Eigen::Index>(c.size());
    x.middleRows(r, n) = c.covariates;
    y.segment(r, n) = Eigen::Map<const Eigen::VectorXd>(c.outcomes.data(), n);
    r += n;
  }

  const auto [cl_xx, cl_xy] = cross_moments(xbar, ybar);
  const auto [in_xx, in_xy] = cross_moments(x, y);
  const Eigen::MatrixXd cl_inv =
      detail::invert_spd<SingularCovariance>(cl_xx, "cluster-mean covariates are collinear");
  const Eigen::MatrixXd in_inv =
      detail::invert_spd<SingularCovariance>(in_xx, "individual covariates are collinear");
  return cl_inv * cl_xy - in_inv * in_xy;
}

}  // namespace crt
