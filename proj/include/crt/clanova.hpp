#pragma once

#include <vector>

#include <Eigen/Dense>

#include "crt/dataset.hpp"
#include "crt/variance.hpp"

namespace crt {

struct ClusterMeansRow {
  double ybar = 0.0;
  int treatment = 0;
  Eigen::VectorXd xbar;
  std::size_t n = 0;
};

/// One row of cluster means per cluster, in dataset order.
struct ClusterMeansTable {
  std::vector<ClusterMeansRow> rows;
  std::size_t p = 0;
};

ClusterMeansTable aggregate(const TrialDataset& data);

enum class ClusterVariance { Classical, Robust };

/// OLS of cluster-mean outcomes on (1, A, cluster-mean covariates).
struct ClusterAncovaFit {
  Eigen::VectorXd alpha;       // (a0, aA, aX...)
  Eigen::MatrixXd covariance;  // classical s^2 (Z'Z)^{-1} or HC0
  Eigen::VectorXd residuals;
  EstimateReport report;
};

/// Throws DegreesOfFreedom (m <= p+2) or SingularDesign.
ClusterAncovaFit fit_cluster_ancova(const TrialDataset& data,
                                    ClusterVariance variance = ClusterVariance::Classical,
                                    double level = 0.95);

/// Difference between the cluster-level projection coefficients
/// Var(Xbar)^{-1} Cov(Xbar, Ybar) and the pooled individual-level ones
/// Var(X)^{-1} Cov(X, Y). Zero (in the limit) exactly when the mixed-model
/// and cluster-level ANCOVA share an asymptotic variance under equal cluster
/// sizes and pi = 0.5. Throws SingularCovariance.
Eigen::VectorXd projection_gap(const TrialDataset& data);

}  // namespace crt
