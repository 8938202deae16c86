#pragma once

#include <span>
#include <vector>

#include "crt/errors.hpp"

namespace crt {

/// Per-cluster covariance Sigma = sigma2 * I_N + tau2 * 1 1^T.
///
/// Everything here works off the rank-one structure; an N x N matrix is
/// never formed. The inverse is
///   Sigma^{-1} = (I - w 1 1^T) / sigma2,   w = tau2 / (sigma2 + N tau2).
class CompoundSymmetry {
 public:
  /// Throws InvalidArgument unless sigma2 > 0 and tau2 >= 0 (both finite).
  CompoundSymmetry(double sigma2, double tau2);

  double sigma2() const noexcept { return sigma2_; }
  double tau2() const noexcept { return tau2_; }

  /// tau2 / (tau2 + sigma2).
  double icc() const noexcept { return tau2_ / (tau2_ + sigma2_); }

  /// Weight w(N) of the rank-one correction in Sigma^{-1}.
  double rank_one_weight(std::size_t n) const noexcept;

  /// 1^T Sigma^{-1} 1 = N / (sigma2 + N tau2).
  double sum_of_inverse(std::size_t n) const noexcept;

 private:
  double sigma2_;
  double tau2_;
};

/// Sigma^{-1} v in O(N).
std::vector<double> cs_inverse_apply(const CompoundSymmetry& cs,
                                     std::span<const double> v);

/// log det(sigma2 I_N + tau2 1 1^T) = (N-1) log sigma2 + log(sigma2 + N tau2).
double cs_logdet(const CompoundSymmetry& cs, std::size_t n);

/// u^T Sigma^{-1} w in O(N). Throws InvalidArgument on length mismatch.
double cs_quadform(const CompoundSymmetry& cs, std::span<const double> u,
                   std::span<const double> w);

}  // namespace crt
