#pragma once

#include <string_view>

#include <Eigen/Dense>

#include "crt/csalg.hpp"
#include "crt/dataset.hpp"

namespace crt {

enum class Estimation { ML, REML };

std::string_view to_string(Estimation e);

struct FitConfig {
  int max_iter = 500;
  double simplex_tol = 1e-8;     // simplex diameter in (log sigma2, logit rho)
  double objective_tol = 1e-10;  // relative spread of objective values
  double sigma2_floor_rel = 1e-10;  // sigma2 floor as a multiple of var(Y)
};

/// Fitted mixed-model ANCOVA: Y_ij = b0 + bA A_i + bX' X_ij + delta_i + eps_ij.
struct MixedFit {
  Eigen::VectorXd beta;  // (b0, bA, bX...)
  double sigma2_hat = 0.0;
  double tau2_hat = 0.0;
  double loglik = 0.0;  // maximised (restricted) profiled log-likelihood
  Estimation estimation_mode = Estimation::ML;
  bool converged = false;
  bool tau2_on_boundary = false;
  bool has_singleton_clusters = false;  // some N_i == 1 (accepted, flagged)
  int iterations = 0;
  std::size_t n_params_p = 0;
  std::size_t n_clusters = 0;

  double delta_hat() const { return beta(1); }
  CompoundSymmetry components() const { return {sigma2_hat, tau2_hat}; }
};

/// Q_i^o = (1, A_i 1, X_i^o), N_i x (p + 2).
Eigen::MatrixXd build_design(const ClusterRecord& record);

/// GLS coefficients at fixed variance components. Throws SingularDesign.
Eigen::VectorXd gls_beta(const TrialDataset& data, const CompoundSymmetry& cs);

/// Sum_i Q_i' Sigma_i^{-1} Q_i at the given components (no df scaling).
Eigen::MatrixXd weighted_gram(const TrialDataset& data, const CompoundSymmetry& cs);

/// Log-likelihood with beta profiled out at its GLS value, including the
/// constant -(sum N_i / 2) log(2 pi). REML subtracts 1/2 log det of the
/// weighted Gram matrix.
double profile_loglik(const TrialDataset& data, const CompoundSymmetry& cs,
                      Estimation mode);

MixedFit fit(const TrialDataset& data, Estimation mode, const FitConfig& config = {});

/// fit() on a copy of `data` with all covariates dropped.
MixedFit fit_unadjusted(const TrialDataset& data, Estimation mode,
                        const FitConfig& config = {});

/// ML score blocks summed over clusters:
///   beta:   sum Q' V r
///   sigma2: sum -tr(V) + r' V^2 r
///   tau2:   sum -1'V1 + (1'V r)^2
/// Each block also carries the sum of absolute term magnitudes, so callers
/// can judge the residual on a relative scale.
struct ScoreBlocks {
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_scale;
  double sigma2 = 0.0;
  double sigma2_scale = 0.0;
  double tau2 = 0.0;
  double tau2_scale = 0.0;
};

ScoreBlocks estimating_equations(const TrialDataset& data, const Eigen::VectorXd& beta,
                                 const CompoundSymmetry& cs);

}  // namespace crt
