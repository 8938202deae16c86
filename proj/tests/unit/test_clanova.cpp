#include <cmath>
#include <random>

#include "crt/clanova.hpp"
#include "crt/dgp.hpp"
#include "crt/errors.hpp"
#include "crt/mmfit.hpp"
#include "doctest.h"
#include "oracles.hpp"

TEST_CASE("aggregate: exact cluster means") {
  crt::TrialDataset d;
  d.covariate_names = {"x"};
  crt::ClusterRecord a;
  a.outcomes = {3.25, 3.25};
  a.covariates = Eigen::MatrixXd::Constant(2, 1, 1.0);
  crt::ClusterRecord b;
  b.treatment = 1;
  b.outcomes = {1, 2, 3, 4};
  b.covariates = Eigen::MatrixXd::Constant(4, 1, 2.0);
  d.clusters = {a, b};
  const auto t = crt::aggregate(d);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].ybar == 3.25);
  CHECK(t.rows[0].n == 2);
  CHECK(t.rows[1].n == 4);
  CHECK(t.rows[1].ybar == 2.5);
  CHECK(t.rows[1].xbar(0) == 2.0);

  // Against a long-double reference on awkward magnitudes.
  std::mt19937_64 gen(1);
  std::normal_distribution<double> z;
  crt::ClusterRecord big;
  for (int j = 0; j < 1000; ++j) big.outcomes.push_back(1e8 + z(gen) * (j % 2 ? 1e-3 : 1e3));
  big.covariates.resize(1000, 0);
  crt::TrialDataset e;
  e.clusters = {big};
  long double ref = 0;
  for (double y : big.outcomes) ref += y;
  ref /= 1000;
  CHECK(std::abs(crt::aggregate(e).rows[0].ybar - static_cast<double>(ref)) <= 1e-13 * std::abs(static_cast<double>(ref)));
}

TEST_CASE("cluster-level ANCOVA") {
  SUBCASE("p = 0 is the difference of arm means of cluster means") {
    const auto data = oracle::random_dataset(2, 11, 2, 9, 0);
    const auto f = crt::fit_cluster_ancova(data);
    double s[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& r : crt::aggregate(data).rows) {
      s[r.treatment] += r.ybar;
      n[r.treatment] += 1;
    }
    CHECK(f.report.delta_hat == doctest::Approx(s[1] / n[1] - s[0] / n[0]).epsilon(1e-12));
  }
  SUBCASE("coefficients and variances match dense normal equations") {
    const auto data = oracle::random_dataset(6, 6, 2, 5, 1);
    const auto tab = crt::aggregate(data);
    Eigen::MatrixXd z(6, 3);
    Eigen::VectorXd y(6);
    for (int i = 0; i < 6; ++i) {
      z.row(i) << 1.0, tab.rows[i].treatment, tab.rows[i].xbar(0);
      y(i) = tab.rows[i].ybar;
    }
    const Eigen::MatrixXd ztz_inv = (z.transpose() * z).inverse();
    const Eigen::VectorXd alpha = ztz_inv * z.transpose() * y;
    const Eigen::VectorXd e = y - z * alpha;
    const auto f = crt::fit_cluster_ancova(data);
    CHECK((f.alpha - alpha).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd classical = e.squaredNorm() / (6.0 - 1.0 - 2.0) * ztz_inv;
    CHECK((f.covariance - classical).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(f.report.se == doctest::Approx(std::sqrt(classical(1, 1))).epsilon(1e-12));
    // Residual orthogonality.
    CHECK((z.transpose() * f.residuals).cwiseAbs().maxCoeff() < 1e-9 * (1.0 + y.cwiseAbs().sum()));

    const auto r = crt::fit_cluster_ancova(data, crt::ClusterVariance::Robust);
    const Eigen::MatrixXd hc0 = ztz_inv * z.transpose() * e.cwiseAbs2().asDiagonal() * z * ztz_inv;
    CHECK((r.covariance - hc0).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.report.variance_method == crt::VarianceMethod::ClusterOLS);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(crt::fit_cluster_ancova(oracle::random_dataset(1, 3, 2, 3, 1)),
                    crt::DegreesOfFreedom);
    auto d = oracle::random_dataset(1, 8, 2, 3, 1);
    for (auto& c : d.clusters) c.covariates.setConstant(c.treatment);
    CHECK_THROWS_AS(crt::fit_cluster_ancova(d), crt::SingularDesign);
  }
}

TEST_CASE("equal sizes: cluster ANCOVA with p = 0 equals the unadjusted mixed model") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = oracle::random_dataset(seed, 14, 5, 5, 0);
    CHECK(std::abs(crt::fit_cluster_ancova(data).report.delta_hat -
                   crt::fit(data, crt::Estimation::ML).delta_hat()) < 1e-8);
  }
}

TEST_CASE("classical and robust variances agree under homoskedastic cluster means") {
  const auto data = oracle::random_dataset(17, 500, 6, 6, 1);
  const double c = crt::fit_cluster_ancova(data).report.se;
  const double r = crt::fit_cluster_ancova(data, crt::ClusterVariance::Robust).report.se;
  const double ratio = (r * r) / (c * c);
  CHECK(ratio >= 0.8);
  CHECK(ratio <= 1.25);
}

TEST_CASE("projection gap") {
  SUBCASE("cluster-level covariates give a near-zero gap") {
    auto data = oracle::random_dataset(4, 2000, 3, 8, 1);
    std::mt19937_64 gen(8);
    std::normal_distribution<double> z;
    for (auto& c : data.clusters) {
      const double x = z(gen);
      c.covariates.setConstant(x);
      for (double& y : c.outcomes) y += 0.8 * x;
    }
    CHECK(std::abs(crt::projection_gap(data)(0)) < 0.05);
  }
  SUBCASE("Scenario 3 (correct specification) gap shrinks with m") {
    crt::ScenarioConfig cfg;
    cfg.scenario = 3;
    cfg.m = 4000;
    cfg.master_seed = 21;
    CHECK(std::abs(crt::projection_gap(crt::gen_trial(cfg, 0).data)(0)) < 0.06);
  }
  SUBCASE("Scenario 1 gap is bounded away from zero") {
    crt::ScenarioConfig cfg;
    cfg.scenario = 1;
    cfg.m = 4000;
    cfg.master_seed = 22;
    const auto data = crt::gen_trial(cfg, 0).data;
    const double n = static_cast<double>(cfg.source_size());
    // Pooled individual slope: Cov(X, Y) / Var(X) = 1 - 1/n. Cluster-level slope:
    // (E[1/N] - 1/n) / E[1/N], which is 0 only when every source unit is enrolled.
    double e_inv = 0.0;
    for (int k = 4; k <= 12; ++k) e_inv += 1.0 / (9.0 * k);
    const double expect = (e_inv - 1.0 / n) / e_inv - (1.0 - 1.0 / n);
    const double gap = crt::projection_gap(data)(0);
    CHECK(gap == doctest::Approx(expect).epsilon(0.1));
    CHECK(std::abs(gap) > 0.3);
  }
  SUBCASE("singular covariate matrices") {
    auto data = oracle::random_dataset(4, 20, 3, 8, 1);
    for (auto& c : data.clusters) c.covariates.setConstant(1.0);
    CHECK_THROWS_AS(crt::projection_gap(data), crt::SingularCovariance);
  }
}
