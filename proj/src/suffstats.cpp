#include "suffstats.hpp"

#include <cmath>

namespace crt::detail {

SufficientStats::SufficientStats(const TrialDataset& data) {
  const auto p = static_cast<Eigen::Index>(data.num_covariates());
  k_ = static_cast<std::size_t>(p) + 2;
  m_ = data.num_clusters();
  const auto k = static_cast<Eigen::Index>(k_);

  x_mean_ = Eigen::VectorXd::Zero(p);
  for (const auto& c : data.clusters) {
    for (double y : c.outcomes) y_mean_ += y;
    if (p > 0) x_mean_ += c.covariates.colwise().sum().transpose();
    total_n_ += static_cast<double>(c.size());
  }
  y_mean_ /= total_n_;
  x_mean_ /= total_n_;

  qq_ = Eigen::MatrixXd::Zero(k, k);
  qy_ = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd row(k), s(k);
  for (const auto& c : data.clusters) {
    const double a = static_cast<double>(c.treatment);
    s.setZero();
    double ysum = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double y = c.outcomes[j] - y_mean_;
      row(0) = 1.0;
      row(1) = a;
      for (Eigen::Index t = 0; t < p; ++t) {
        row(2 + t) = c.covariates(static_cast<Eigen::Index>(j), t) - x_mean_(t);
      }
      qq_.selfadjointView<Eigen::Lower>().rankUpdate(row);
      qy_ += row * y;
      yy_ += y * y;
      s += row;
      ysum += y;
    }
    auto [it, fresh] = groups_.try_emplace(c.size());
    SizeGroup& g = it->second;
    if (fresh) {
      g.ss = Eigen::MatrixXd::Zero(k, k);
      g.sy = Eigen::VectorXd::Zero(k);
      g.s = Eigen::VectorXd::Zero(k);
    }
    g.count += 1.0;
    g.ss.selfadjointView<Eigen::Lower>().rankUpdate(s);
    g.sy += s * ysum;
    g.yy += ysum * ysum;
    g.s += s;
    g.y += ysum;
  }
  qq_ = qq_.selfadjointView<Eigen::Lower>();
  for (auto& [n, g] : groups_) g.ss = g.ss.selfadjointView<Eigen::Lower>();
  y_var_ = total_n_ > 1.0 ? yy_ / (total_n_ - 1.0) : 0.0;
}

std::optional<GlsSolution> SufficientStats::solve(const CompoundSymmetry& cs) const {
  const double s2 = cs.sigma2();
  Eigen::MatrixXd a = qq_;
  Eigen::VectorXd b = qy_;
  double yvy = yy_;
  double logdet = 0.0;
  for (const auto& [n, g] : groups_) {
    const double w = cs.rank_one_weight(n);
    a.noalias() -= w * g.ss;
    b.noalias() -= w * g.sy;
    yvy -= w * g.yy;
    logdet += g.count * cs_logdet(cs, n);
  }
  a /= s2;
  b /= s2;
  yvy /= s2;

  // Equilibrate before judging the condition number so covariate units
  // do not matter.
  const Eigen::VectorXd diag = a.diagonal();
  if ((diag.array() <= 0.0).any()) return std::nullopt;
  const Eigen::VectorXd d = diag.array().rsqrt();
  const Eigen::MatrixXd scaled = d.asDiagonal() * a * d.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) {
    return std::nullopt;
  }
  GlsSolution sol;
  sol.beta = d.asDiagonal() * ldlt.solve(d.asDiagonal() * b);
  sol.gram = std::move(a);
  sol.quad = std::max(yvy - b.dot(sol.beta), 0.0);
  sol.logdet_sigma = logdet;
  sol.logdet_gram = ldlt.vectorD().array().log().sum() - 2.0 * d.array().log().sum();
  return sol;
}

double SufficientStats::objective(const GlsSolution& sol, bool reml) const {
  constexpr double kLog2Pi = 1.8378770664093454836;
  double ll = -0.5 * (sol.logdet_sigma + sol.quad) - 0.5 * total_n_ * kLog2Pi;
  if (reml) ll -= 0.5 * sol.logdet_gram;
  return ll;
}

Eigen::Vector2d SufficientStats::variance_score(const CompoundSymmetry& cs,
                                               const GlsSolution& sol, bool reml) const {
  const double s2 = cs.sigma2();
  const double s4 = s2 * s2;
  const Eigen::VectorXd& b = sol.beta;
  // Cluster residual r_i, R_i = 1'r_i:
  //   1'V = c 1',  c = 1/(sigma2 + N tau2)
  //   V^2 = (I - (2w - N w^2) J) / sigma2^2
  double g_s = 0.0, g_t = 0.0;
  double rr_total = residual_ss(b);
  Eigen::MatrixXd d_s, d_t;
  if (reml) {
    d_s = qq_;
    d_t = Eigen::MatrixXd::Zero(qq_.rows(), qq_.cols());
  }
  for (const auto& [n, g] : groups_) {
    const double nd = static_cast<double>(n);
    const double w = cs.rank_one_weight(n);
    const double c = 1.0 / (s2 + nd * cs.tau2());
    const double big_r2 = g.yy - 2.0 * b.dot(g.sy) + b.dot(g.ss * b);
    const double shrink = 2.0 * w - nd * w * w;
    g_s += -g.count * ((nd - 1.0) / s2 + c) - shrink * big_r2 / s4;
    g_t += -g.count * nd * c + c * c * big_r2;
    if (reml) {
      d_s.noalias() -= shrink * g.ss;
      d_t.noalias() += (c * c) * g.ss;
    }
  }
  g_s += rr_total / s4;
  Eigen::Vector2d out(0.5 * g_s, 0.5 * g_t);
  if (reml) {
    // -1/2 d log|G| = 1/2 tr(G^{-1} sum Q'V (dSigma) V Q)
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(sol.gram);
    out(0) += 0.5 * ldlt.solve(d_s / s4).trace();
    out(1) += 0.5 * ldlt.solve(d_t).trace();
  }
  return out;
}

Eigen::VectorXd SufficientStats::uncentre(const Eigen::VectorXd& beta_c) const {
  Eigen::VectorXd beta = beta_c;
  const auto p = x_mean_.size();
  beta(0) = beta_c(0) + y_mean_ - (p > 0 ? beta_c.tail(p).dot(x_mean_) : 0.0);
  return beta;
}

double SufficientStats::residual_ss(const Eigen::VectorXd& beta_c) const {
  return yy_ - 2.0 * beta_c.dot(qy_) + beta_c.dot(qq_ * beta_c);
}

}  // namespace crt::detail
