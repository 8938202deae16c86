#include "crt/variance.hpp"

#include <cmath>
#include <limits>

#include "crt/csalg.hpp"
#include "crt/errors.hpp"
#include "linalg.hpp"

namespace crt {

std::string_view to_string(VarianceMethod v) {
  switch (v) {
    case VarianceMethod::ModelBased: return "model-based";
    case VarianceMethod::Sandwich: return "sandwich";
    case VarianceMethod::ClusterOLS: return "cluster-ols";
    case VarianceMethod::Influence: return "influence";
  }
  return "unknown";
}

namespace {

void require_dof(const TrialDataset& data) {
  const std::size_t m = data.num_clusters();
  const std::size_t k = data.num_covariates() + 2;
  if (m <= k) {
    throw DegreesOfFreedom("need more clusters (" + std::to_string(m) +
                           ") than regression parameters (" + std::to_string(k) + ")");
  }
}

Eigen::MatrixXd invert_gram(const Eigen::MatrixXd& gram) {
  return detail::invert_spd(gram, "weighted Gram matrix is singular");
}

}  // namespace

CoefficientCovariance model_based_variance(const MixedFit& fit, const TrialDataset& data,
                                           DfAdjustment df) {
  data.validate();
  require_dof(data);
  const double m = static_cast<double>(data.num_clusters());
  const double k = static_cast<double>(data.num_covariates() + 2);
  const bool inflate = df == DfAdjustment::Always ||
                       (df == DfAdjustment::Auto && fit.estimation_mode == Estimation::ML);
  // Sigma_hat = c * Sigma  =>  (Q' Sigma_hat^{-1} Q)^{-1} = c * (Q' Sigma^{-1} Q)^{-1}.
  const double factor = inflate ? m / (m - k) : 1.0;
  return {factor * invert_gram(weighted_gram(data, fit.components()))};
}

CoefficientCovariance sandwich_variance(const MixedFit& fit, const TrialDataset& data) {
  data.validate();
  require_dof(data);
  const CompoundSymmetry cs = fit.components();
  const Eigen::MatrixXd bread = invert_gram(weighted_gram(data, cs));
  const auto k = bread.rows();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  for (const auto& c : data.clusters) {
    const Eigen::MatrixXd q = build_design(c);
    const Eigen::Map<const Eigen::VectorXd> y(c.outcomes.data(),
                                              static_cast<Eigen::Index>(c.size()));
    const Eigen::VectorXd r = y - q * fit.beta;
    const std::vector<double> vr = cs_inverse_apply(cs, {r.data(), c.size()});
    const Eigen::VectorXd score =
        q.transpose() *
        Eigen::Map<const Eigen::VectorXd>(vr.data(), static_cast<Eigen::Index>(vr.size()));
    meat.selfadjointView<Eigen::Lower>().rankUpdate(score);
  }
  meat = meat.selfadjointView<Eigen::Lower>();
  // The m/(m-p-2) scaling of Sigma_hat cancels between bread and meat.
  Eigen::MatrixXd cov = bread * meat * bread;
  return {0.5 * (cov + cov.transpose())};
}

InfluenceDiagnostics influence_values(const MixedFit& fit, const TrialDataset& data,
                                      double pi) {
  if (!(pi > 0.0 && pi < 1.0)) {
    throw InvalidPi("randomization probability must lie in (0, 1)");
  }
  data.validate_structure();
  const CompoundSymmetry cs = fit.components();
  const double m = static_cast<double>(data.num_clusters());

  InfluenceDiagnostics out;
  for (const auto& c : data.clusters) out.denom_hat += cs.sum_of_inverse(c.size());
  out.denom_hat /= m;

  out.if_values.reserve(data.num_clusters());
  for (const auto& c : data.clusters) {
    const Eigen::MatrixXd q = build_design(c);
    const Eigen::Map<const Eigen::VectorXd> y(c.outcomes.data(),
                                              static_cast<Eigen::Index>(c.size()));
    const double total_resid = (y - q * fit.beta).sum();
    const double one_v_r =
        total_resid / (cs.sigma2() + static_cast<double>(c.size()) * cs.tau2());
    const double a = static_cast<double>(c.treatment);
    const double value = (a - pi) / (pi * (1.0 - pi) * out.denom_hat) * one_v_r;
    out.if_values.push_back(value);
    out.v_hat += value * value;
  }
  out.v_hat /= m;
  return out;
}

double empirical_pi(const TrialDataset& data) {
  if (data.clusters.empty()) throw EmptyDataset("no clusters");
  double treated = 0.0;
  for (const auto& c : data.clusters) treated += c.treatment;
  return treated / static_cast<double>(data.num_clusters());
}

SizeDistribution SizeDistribution::uniform(int lo, int hi) {
  if (lo < 1 || hi < lo) throw InvalidArgument("uniform size distribution needs 1 <= lo <= hi");
  SizeDistribution d;
  const double w = 1.0 / static_cast<double>(hi - lo + 1);
  for (int n = lo; n <= hi; ++n) {
    d.sizes.push_back(n);
    d.probs.push_back(w);
  }
  return d;
}

SizeDistribution SizeDistribution::point(double n) { return {{n}, {1.0}}; }

bool SizeDistribution::degenerate() const {
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (probs[i] > 0.0 && probs[i] < 1.0) return false;
  }
  return true;
}

double balanced_true_variance(double sigma2, double tau2, double n_tilde) {
  if (!(sigma2 > 0.0) || tau2 < 0.0 || n_tilde < 1.0) {
    throw InvalidArgument("balanced_true_variance: need sigma2 > 0, tau2 >= 0, n >= 1");
  }
  return 4.0 * (sigma2 + n_tilde * tau2) / n_tilde;
}

double cluster_level_true_variance(double sigma2, double tau2, const SizeDistribution& sizes) {
  return 4.0 * sizes.expect([&](double n) { return (sigma2 + n * tau2) / n; });
}

double mixed_model_true_variance(double sigma2, double tau2, const SizeDistribution& sizes) {
  return 4.0 / sizes.expect([&](double n) { return n / (sigma2 + n * tau2); });
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  // Acklam's rational approximation (relative error ~1e-9) ...
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // ... refined by one Halley step against erfc.
  constexpr double kSqrt2Pi = 2.50662827463100050242;
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

std::pair<double, double> confidence_interval(double delta_hat, double se, double level) {
  if (!(se >= 0.0)) throw InvalidArgument("standard error must be >= 0");
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("level must lie in (0, 1)");
  if (se == 0.0) return {delta_hat, delta_hat};
  const double half = normal_quantile(0.5 * (1.0 + level)) * se;
  return {delta_hat - half, delta_hat + half};
}

EstimateReport make_report(double delta_hat, double se, double level, VarianceMethod method,
                           std::string label) {
  EstimateReport r;
  r.delta_hat = delta_hat;
  r.se = se;
  r.level = level;
  std::tie(r.ci_low, r.ci_high) = confidence_interval(delta_hat, se, level);
  r.variance_method = method;
  r.estimator_label = std::move(label);
  return r;
}

}  // namespace crt
