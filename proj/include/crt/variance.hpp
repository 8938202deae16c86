#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "crt/dataset.hpp"
#include "crt/mmfit.hpp"

namespace crt {

enum class VarianceMethod { ModelBased, Sandwich, ClusterOLS, Influence };

std::string_view to_string(VarianceMethod v);

/// Point estimate with its standard error and normal-approximation interval.
struct EstimateReport {
  double delta_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double level = 0.95;
  VarianceMethod variance_method = VarianceMethod::ModelBased;
  std::string estimator_label;
};

/// Whether the model-based covariance applies the m/(m-p-2) inflation of
/// Sigma_hat. Auto applies it to ML fits only: REML variance components
/// already account for the fixed-effect degrees of freedom.
enum class DfAdjustment { Auto, Always, Never };

struct CoefficientCovariance {
  Eigen::MatrixXd matrix;  // (p+2) x (p+2), ordered (b0, bA, bX...)
  double delta_variance() const { return matrix(1, 1); }
};

/// Inverse of sum_i Q_i' Sigma_hat_i^{-1} Q_i with Sigma_hat_i scaled by
/// m/(m-p-2). Throws DegreesOfFreedom when m <= p+2.
CoefficientCovariance model_based_variance(const MixedFit& fit, const TrialDataset& data,
                                           DfAdjustment df = DfAdjustment::Auto);

/// bread * meat * bread with per-cluster score outer products.
CoefficientCovariance sandwich_variance(const MixedFit& fit, const TrialDataset& data);

struct InfluenceDiagnostics {
  std::vector<double> if_values;  // one per cluster, input order
  double v_hat = 0.0;             // mean of squared influence values
  double denom_hat = 0.0;         // m^{-1} sum N_i / (sigma2 + N_i tau2)
};

/// Plug-in influence values of the treatment-effect estimator. `pi` is the
/// design randomization probability; throws InvalidPi unless 0 < pi < 1.
InfluenceDiagnostics influence_values(const MixedFit& fit, const TrialDataset& data,
                                      double pi);

/// Fraction of treated clusters (the optional empirical alternative to the design pi).
double empirical_pi(const TrialDataset& data);

/// Finite discrete distribution on positive cluster sizes.
struct SizeDistribution {
  std::vector<double> sizes;
  std::vector<double> probs;

  static SizeDistribution uniform(int lo, int hi);
  static SizeDistribution point(double n);
  bool degenerate() const;
  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) acc += probs[i] * f(sizes[i]);
    return acc;
  }
};

/// Asymptotic variance of sqrt(m)(delta_hat - delta) for a balanced design
/// at pi = 0.5: 4 (sigma2 + n tau2) / n.
double balanced_true_variance(double sigma2, double tau2, double n_tilde);

/// Cluster-level ANCOVA asymptotic variance under correct specification:
/// 4 E[(sigma2 + N tau2) / N].
double cluster_level_true_variance(double sigma2, double tau2, const SizeDistribution& sizes);

/// Mixed-model ANCOVA asymptotic variance under correct specification:
/// 4 / E[N / (sigma2 + N tau2)].
double mixed_model_true_variance(double sigma2, double tau2, const SizeDistribution& sizes);

/// Standard normal quantile, |error| below 1e-12 on (0, 1).
double normal_quantile(double p);

std::pair<double, double> confidence_interval(double delta_hat, double se, double level);

EstimateReport make_report(double delta_hat, double se, double level, VarianceMethod method,
                           std::string label);

}  // namespace crt
