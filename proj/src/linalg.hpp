#pragma once

#include <Eigen/Dense>

#include "crt/errors.hpp"

namespace crt::detail {

/// Inverse of a symmetric positive definite matrix after diagonal
/// equilibration. Throws E when the equilibrated matrix has rcond < 1e-13.
template <class E = SingularDesign>
Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& a, const char* what) {
  const Eigen::VectorXd diag = a.diagonal();
  if (!diag.allFinite() || (diag.array() <= 0.0).any()) throw E(what);
  const Eigen::VectorXd d = diag.array().rsqrt();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(d.asDiagonal() * a * d.asDiagonal());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
    throw E(what);
  }
  const auto k = a.rows();
  Eigen::MatrixXd inv =
      d.asDiagonal() * ldlt.solve(Eigen::MatrixXd::Identity(k, k)) * d.asDiagonal();
  return 0.5 * (inv + inv.transpose());
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace crt::detail
