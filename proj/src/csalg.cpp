#include "crt/csalg.hpp"

#include <cmath>
#include <string>

namespace crt {

CompoundSymmetry::CompoundSymmetry(double sigma2, double tau2)
    : sigma2_(sigma2), tau2_(tau2) {
  if (!(std::isfinite(sigma2) && sigma2 > 0.0)) {
    throw InvalidArgument("CompoundSymmetry: sigma2 must be finite and > 0, got " +
                          std::to_string(sigma2));
  }
  if (!(std::isfinite(tau2) && tau2 >= 0.0)) {
    throw InvalidArgument("CompoundSymmetry: tau2 must be finite and >= 0, got " +
                          std::to_string(tau2));
  }
}

double CompoundSymmetry::rank_one_weight(std::size_t n) const noexcept {
  return tau2_ / (sigma2_ + static_cast<double>(n) * tau2_);
}

double CompoundSymmetry::sum_of_inverse(std::size_t n) const noexcept {
  const double nd = static_cast<double>(n);
  return nd / (sigma2_ + nd * tau2_);
}

std::vector<double> cs_inverse_apply(const CompoundSymmetry& cs,
                                     std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x;
  const double shift = cs.rank_one_weight(v.size()) * total;
  std::vector<double> out(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    out[j] = (v[j] - shift) / cs.sigma2();
  }
  return out;
}

double cs_logdet(const CompoundSymmetry& cs, std::size_t n) {
  const double nd = static_cast<double>(n);
  return (nd - 1.0) * std::log(cs.sigma2()) + std::log(cs.sigma2() + nd * cs.tau2());
}

double cs_quadform(const CompoundSymmetry& cs, std::span<const double> u,
                   std::span<const double> w) {
  if (u.size() != w.size()) {
    throw InvalidArgument("cs_quadform: length mismatch");
  }
  double uw = 0.0, su = 0.0, sw = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    uw += u[j] * w[j];
    su += u[j];
    sw += w[j];
  }
  return (uw - cs.rank_one_weight(u.size()) * su * sw) / cs.sigma2();
}

}  // namespace crt
