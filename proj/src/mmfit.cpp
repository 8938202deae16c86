#include "crt/mmfit.hpp"

#include <array>
#include <cmath>
#include <optional>

#include "crt/errors.hpp"
#include "crt/nelder_mead.hpp"
#include "suffstats.hpp"

namespace crt {

std::string_view to_string(Estimation e) { return e == Estimation::ML ? "ML" : "REML"; }

Eigen::MatrixXd build_design(const ClusterRecord& record) {
  const auto n = static_cast<Eigen::Index>(record.size());
  const auto p = record.covariates.cols();
  Eigen::MatrixXd q(n, p + 2);
  q.col(0).setOnes();
  q.col(1).setConstant(static_cast<double>(record.treatment));
  if (p > 0) q.rightCols(p) = record.covariates;
  return q;
}

namespace {

detail::GlsSolution solve_or_throw(const detail::SufficientStats& stats,
                                   const CompoundSymmetry& cs) {
  auto sol = stats.solve(cs);
  if (!sol) {
    throw SingularDesign("weighted Gram matrix is singular (collinear or constant columns)");
  }
  return std::move(*sol);
}

}  // namespace

Eigen::VectorXd gls_beta(const TrialDataset& data, const CompoundSymmetry& cs) {
  data.validate();
  const detail::SufficientStats stats(data);
  return stats.uncentre(solve_or_throw(stats, cs).beta);
}

Eigen::MatrixXd weighted_gram(const TrialDataset& data, const CompoundSymmetry& cs) {
  data.validate_structure();
  const auto k = static_cast<Eigen::Index>(data.num_covariates() + 2);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  for (const auto& c : data.clusters) {
    const Eigen::MatrixXd q = build_design(c);
    const Eigen::VectorXd s = q.colwise().sum().transpose();
    gram.noalias() += q.transpose() * q;
    gram.noalias() -= cs.rank_one_weight(c.size()) * s * s.transpose();
  }
  return gram / cs.sigma2();
}

double profile_loglik(const TrialDataset& data, const CompoundSymmetry& cs,
                      Estimation mode) {
  data.validate();
  const detail::SufficientStats stats(data);
  return stats.objective(solve_or_throw(stats, cs), mode == Estimation::REML);
}

MixedFit fit(const TrialDataset& data, Estimation mode, const FitConfig& config) {
  data.validate();
  const detail::SufficientStats stats(data);
  const bool reml = mode == Estimation::REML;
  const double n_total = stats.total_n();
  const double k = static_cast<double>(stats.k());
  const double m = static_cast<double>(stats.num_clusters());

  const double y_var = stats.outcome_variance();
  const double floor = config.sigma2_floor_rel * (y_var > 0.0 ? y_var : 1.0);

  // OLS (tau2 = 0) solution doubles as the boundary candidate and the start.
  const detail::GlsSolution ols = solve_or_throw(stats, CompoundSymmetry(1.0, 0.0));
  const double rss = std::max(stats.residual_ss(ols.beta), 0.0);

  // ANOVA-style moment start from the OLS residuals.
  double between_ss = 0.0, mean_sum = 0.0, mean_sq = 0.0, inv_n_sum = 0.0;
  for (const auto& [n, g] : stats.groups()) {
    const double nd = static_cast<double>(n);
    const double tot_sq = g.yy - 2.0 * ols.beta.dot(g.sy) + ols.beta.dot(g.ss * ols.beta);
    const double tot = g.y - ols.beta.dot(g.s);
    between_ss += tot_sq / nd;
    mean_sum += tot / nd;
    mean_sq += tot_sq / (nd * nd);
    inv_n_sum += g.count / nd;
  }
  const double within_ss = std::max(rss - between_ss, 0.0);
  double sigma2_0 = n_total > m ? within_ss / (n_total - m) : rss / n_total;
  sigma2_0 = std::max(sigma2_0, std::max(floor, 1e-8 * y_var));
  const double mean_of_means = mean_sum / m;
  const double var_of_means =
      m > 1.0 ? (mean_sq - m * mean_of_means * mean_of_means) / (m - 1.0) : 0.0;
  const double harmonic_n = m / inv_n_sum;
  const double tau2_0 = std::max(var_of_means - sigma2_0 / harmonic_n, 0.0);

  auto decode = [floor](const std::array<double, 2>& x) {
    const double sigma2 = floor + std::exp(x[0]);
    const double rho = 1.0 / (1.0 + std::exp(-x[1]));
    return CompoundSymmetry(sigma2, sigma2 * rho / (1.0 - rho));
  };
  auto negative_objective = [&](const std::array<double, 2>& x) {
    const auto sol = stats.solve(decode(x));
    if (!sol) return std::numeric_limits<double>::infinity();
    return -stats.objective(*sol, reml);
  };

  const double rho_0 = std::clamp(tau2_0 / (tau2_0 + sigma2_0), 0.01, 0.99);
  std::array<double, 2> start{std::log(std::max(sigma2_0 - floor, floor)),
                              std::log(rho_0 / (1.0 - rho_0))};
  optim::NelderMeadOptions<2> opt;
  opt.step = {0.5, 0.5};
  opt.lower = {std::log(floor) - 40.0, -30.0};
  opt.upper = {std::log(std::max(y_var, floor)) + 40.0, 30.0};
  opt.x_tol = config.simplex_tol;
  opt.f_tol = config.objective_tol;
  opt.max_iter = config.max_iter;

  auto nm = optim::nelder_mead<2>(negative_objective, start, opt);
  int iterations = nm.iterations;
  // One restart from the best vertex guards against a collapsed simplex.
  opt.step = {0.1, 0.1};
  auto again = optim::nelder_mead<2>(negative_objective, nm.x, opt);
  iterations += again.iterations;
  if (again.value <= nm.value) nm = again;
  bool converged = again.converged;

  CompoundSymmetry best = decode(nm.x);
  double best_value = -nm.value;
  bool boundary = false;

  // Nelder-Mead only sees function values, which flatten out near the optimum
  // (noise ~1e-13 in the objective is ~1e-7 in the parameters). Finish with
  // Newton steps on the exact score, Hessian by differencing the score.
  if (std::isfinite(best_value) && best.tau2() > 0.0) {
    auto scaled_norm = [](const Eigen::Vector2d& g, double scale) {
      return scale * g.norm();
    };
    CompoundSymmetry cur = best;
    auto sol = stats.solve(cur);
    for (int it = 0; sol && it < 10; ++it) {
      const double scale = cur.sigma2() + cur.tau2();
      const Eigen::Vector2d g = stats.variance_score(cur, *sol, reml);
      const double h = 1e-5 * scale;
      Eigen::Matrix2d hess;
      bool ok = true;
      for (int j = 0; j < 2 && ok; ++j) {
        const double base = j == 0 ? cur.sigma2() : cur.tau2();
        const double lo_x = base > h ? base - h : base;
        const double hi_x = base + h;
        auto score_at = [&](double x) -> std::optional<Eigen::Vector2d> {
          const CompoundSymmetry p = j == 0 ? CompoundSymmetry(x, cur.tau2())
                                            : CompoundSymmetry(cur.sigma2(), x);
          const auto sp = stats.solve(p);
          if (!sp) return std::nullopt;
          return stats.variance_score(p, *sp, reml);
        };
        const auto hi = score_at(hi_x);
        const auto lo = lo_x == base ? std::optional<Eigen::Vector2d>(g) : score_at(lo_x);
        if (!hi || !lo) ok = false;
        else hess.col(j) = (*hi - *lo) / (hi_x - lo_x);
      }
      if (!ok) break;
      hess = 0.5 * (hess + hess.transpose()).eval();
      if (!(hess(0, 0) < 0.0 && hess.determinant() > 0.0)) break;
      const Eigen::Vector2d step = -hess.ldlt().solve(g);
      if (!step.allFinite() || step.norm() > 1e-2 * scale) break;
      const double s2 = cur.sigma2() + step(0), t2 = cur.tau2() + step(1);
      if (!(s2 > floor) || !(t2 > 0.0)) break;
      const CompoundSymmetry next(s2, t2);
      auto next_sol = stats.solve(next);
      if (!next_sol) break;
      const Eigen::Vector2d g_next = stats.variance_score(next, *next_sol, reml);
      const double value = stats.objective(*next_sol, reml);
      if (scaled_norm(g_next, s2 + t2) >= scaled_norm(g, scale) ||
          value < best_value - 1e-10 * (1.0 + std::abs(best_value))) {
        break;
      }
      cur = next;
      sol = std::move(next_sol);
      best = cur;
      best_value = value;
      if (step.norm() < 1e-14 * scale) break;
    }
  }

  // Exact tau2 = 0 profile optimum.
  const double dof = reml ? n_total - k : n_total;
  if (dof > 0.0) {
    const CompoundSymmetry edge(std::max(rss / dof, floor), 0.0);
    const auto sol = stats.solve(edge);
    if (sol) {
      const double edge_value = stats.objective(*sol, reml);
      if (!std::isfinite(best_value) || edge_value >= best_value) {
        best = edge;
        best_value = edge_value;
        boundary = true;
        converged = true;
      }
    }
  }

  MixedFit out;
  out.beta = stats.uncentre(solve_or_throw(stats, best).beta);
  out.sigma2_hat = best.sigma2();
  out.tau2_hat = best.tau2();
  out.loglik = best_value;
  out.estimation_mode = mode;
  out.converged = converged && std::isfinite(best_value);
  out.tau2_on_boundary = boundary;
  out.iterations = iterations;
  out.n_params_p = data.num_covariates();
  out.n_clusters = data.num_clusters();
  for (const auto& c : data.clusters) {
    if (c.size() == 1) out.has_singleton_clusters = true;
  }
  return out;
}

MixedFit fit_unadjusted(const TrialDataset& data, Estimation mode, const FitConfig& config) {
  return fit(drop_covariates(data), mode, config);
}

ScoreBlocks estimating_equations(const TrialDataset& data, const Eigen::VectorXd& beta,
                                 const CompoundSymmetry& cs) {
  data.validate_structure();
  const auto k = static_cast<Eigen::Index>(data.num_covariates() + 2);
  if (beta.size() != k) throw InvalidArgument("estimating_equations: beta has wrong length");
  ScoreBlocks out;
  out.beta = Eigen::VectorXd::Zero(k);
  out.beta_scale = Eigen::VectorXd::Zero(k);
  for (const auto& c : data.clusters) {
    const Eigen::MatrixXd q = build_design(c);
    const Eigen::Map<const Eigen::VectorXd> y(c.outcomes.data(),
                                              static_cast<Eigen::Index>(c.size()));
    const Eigen::VectorXd r = y - q * beta;
    const std::vector<double> vr = cs_inverse_apply(cs, {r.data(), c.size()});
    const Eigen::Map<const Eigen::VectorXd> vr_vec(vr.data(), static_cast<Eigen::Index>(vr.size()));

    const Eigen::VectorXd term = q.transpose() * vr_vec;
    out.beta += term;
    out.beta_scale += (q.transpose().cwiseAbs() * vr_vec.cwiseAbs());

    const double nd = static_cast<double>(c.size());
    const double trace = (nd - nd * cs.rank_one_weight(c.size())) / cs.sigma2();
    const double rv2r = vr_vec.squaredNorm();
    out.sigma2 += -trace + rv2r;
    out.sigma2_scale += trace + rv2r;

    const double one_v_one = cs.sum_of_inverse(c.size());
    const double one_v_r = vr_vec.sum();
    out.tau2 += -one_v_one + one_v_r * one_v_r;
    out.tau2_scale += one_v_one + one_v_r * one_v_r;
  }
  return out;
}

}  // namespace crt
