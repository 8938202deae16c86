#pragma once

// Grouped sufficient statistics for the compound-symmetric GLS problem.
//
// Every cluster-dependent quantity in Q'Sigma^{-1}Q, Q'Sigma^{-1}Y and
// Y'Sigma^{-1}Y depends on the cluster only through N_i (via the rank-one
// weight w(N)) and a handful of outer products, so clusters are pooled by
// size once and each likelihood evaluation costs O(#distinct sizes * k^2).
// Outcomes and covariates are centred at their grand means first; this only
// moves the intercept and keeps the expansion y'y - b'beta well conditioned.

#include <map>
#include <optional>

#include <Eigen/Dense>

#include "crt/csalg.hpp"
#include "crt/dataset.hpp"

namespace crt::detail {

struct SizeGroup {
  double count = 0.0;
  Eigen::MatrixXd ss;   // sum s_i s_i'
  Eigen::VectorXd sy;   // sum s_i (1'y_i)
  double yy = 0.0;      // sum (1'y_i)^2
  Eigen::VectorXd s;    // sum s_i
  double y = 0.0;       // sum 1'y_i
};

struct GlsSolution {
  Eigen::VectorXd beta;       // centred parameterisation
  Eigen::MatrixXd gram;       // Q'Sigma^{-1}Q
  double quad = 0.0;          // r'Sigma^{-1}r at beta
  double logdet_sigma = 0.0;  // sum_i log|Sigma_i|
  double logdet_gram = 0.0;
};

class SufficientStats {
 public:
  explicit SufficientStats(const TrialDataset& data);

  std::size_t k() const noexcept { return k_; }
  double total_n() const noexcept { return total_n_; }
  std::size_t num_clusters() const noexcept { return m_; }
  double outcome_variance() const noexcept { return y_var_; }
  const std::map<std::size_t, SizeGroup>& groups() const noexcept { return groups_; }

  /// Returns nullopt when the Gram matrix is numerically singular.
  std::optional<GlsSolution> solve(const CompoundSymmetry& cs) const;

  double objective(const GlsSolution& sol, bool reml) const;

  /// Gradient of the profiled (restricted) log-likelihood in (sigma2, tau2),
  /// evaluated at the GLS solution for cs. Exact, so it resolves the optimum
  /// far below what function values can.
  Eigen::Vector2d variance_score(const CompoundSymmetry& cs, const GlsSolution& sol,
                                 bool reml) const;

  /// Map centred coefficients back to the original (b0, bA, bX) scale.
  Eigen::VectorXd uncentre(const Eigen::VectorXd& beta_c) const;

  /// Total residual sum of squares r'r for a centred beta.
  double residual_ss(const Eigen::VectorXd& beta_c) const;

 private:
  std::size_t k_ = 0;
  std::size_t m_ = 0;
  double total_n_ = 0.0;
  double y_mean_ = 0.0;
  double y_var_ = 0.0;
  Eigen::VectorXd x_mean_;
  Eigen::MatrixXd qq_;
  Eigen::VectorXd qy_;
  double yy_ = 0.0;
  std::map<std::size_t, SizeGroup> groups_;
};

}  // namespace crt::detail
