#include <cmath>

#include "crt/dgp.hpp"
#include "crt/errors.hpp"
#include "crt/variance.hpp"
#include "doctest.h"
#include "oracles.hpp"

namespace {

crt::TrialDataset scaled(crt::TrialDataset d, double c) {
  for (auto& cl : d.clusters)
    for (double& y : cl.outcomes) y *= c;
  return d;
}

double min_eigenvalue(const Eigen::MatrixXd& a) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (a + a.transpose()))
      .eigenvalues()
      .minCoeff();
}

}  // namespace

TEST_CASE("model-based variance: closed form at tau2 = 0, p = 0, equal sizes") {
  const auto data = oracle::random_dataset(8, 10, 4, 4, 0);
  crt::MixedFit f;
  f.sigma2_hat = 2.5;
  f.tau2_hat = 0.0;
  f.beta = crt::gls_beta(data, {2.5, 0.0});
  f.n_clusters = 10;
  const double m = 10.0, n = 4.0, pi_hat = crt::empirical_pi(data);
  const double expect = (m / (m - 2.0)) * 2.5 / (n * m * pi_hat * (1.0 - pi_hat));
  CHECK(crt::model_based_variance(f, data).delta_variance() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(crt::model_based_variance(f, data, crt::DfAdjustment::Never).delta_variance() ==
        doctest::Approx(expect * (m - 2.0) / m).epsilon(1e-12));
}

TEST_CASE("model-based and sandwich variances match dense oracles") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const auto data = oracle::random_dataset(seed, 8, 2, 4, 1);
    const auto f = crt::fit(data, crt::Estimation::ML);
    const double m = 8.0, p = 1.0;
    const Eigen::MatrixXd mb = oracle::model_based(data, f.sigma2_hat, f.tau2_hat, m / (m - p - 2.0));
    const Eigen::MatrixXd sw = oracle::sandwich(data, f.beta, f.sigma2_hat, f.tau2_hat);
    CHECK((crt::model_based_variance(f, data).matrix - mb).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((crt::sandwich_variance(f, data).matrix - sw).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(min_eigenvalue(crt::model_based_variance(f, data).matrix) >= -1e-10);
    CHECK(min_eigenvalue(crt::sandwich_variance(f, data).matrix) >= -1e-10);

    const auto r = crt::fit(data, crt::Estimation::REML);
    const Eigen::MatrixXd mbr = oracle::model_based(data, r.sigma2_hat, r.tau2_hat, 1.0);
    CHECK((crt::model_based_variance(r, data).matrix - mbr).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("variance errors and degenerate cases") {
  const auto data = oracle::random_dataset(3, 4, 3, 3, 2);
  crt::MixedFit f;
  f.sigma2_hat = 1.0;
  f.beta = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(crt::model_based_variance(f, data), crt::DegreesOfFreedom);
  CHECK_THROWS_AS(crt::sandwich_variance(f, data), crt::DegreesOfFreedom);

  SUBCASE("zero residuals give a zero sandwich and zero influence values") {
    auto exact = oracle::random_dataset(4, 8, 2, 4, 1);
    for (auto& c : exact.clusters)
      for (std::size_t j = 0; j < c.size(); ++j)
        c.outcomes[j] = 1.0 + 2.0 * c.treatment - 0.5 * c.covariates(static_cast<Eigen::Index>(j), 0);
    crt::MixedFit g;
    g.sigma2_hat = 1.0;
    g.tau2_hat = 0.3;
    g.beta = Eigen::Vector3d(1.0, 2.0, -0.5);
    g.n_params_p = 1;
    g.n_clusters = 8;
    CHECK(crt::sandwich_variance(g, exact).matrix.cwiseAbs().maxCoeff() < 1e-20);
    const auto inf = crt::influence_values(g, exact, 0.5);
    for (double v : inf.if_values) CHECK(std::abs(v) < 1e-12);
    CHECK(inf.v_hat < 1e-20);
  }
  CHECK_THROWS_AS(crt::influence_values(f, data, 0.0), crt::InvalidPi);
  CHECK_THROWS_AS(crt::influence_values(f, data, 1.0), crt::InvalidPi);
}

TEST_CASE("scale equivariance") {
  const auto data = oracle::random_dataset(12, 20, 3, 7, 1);
  const auto f = crt::fit(data, crt::Estimation::ML);
  const double c = 3.5;
  const auto data_c = scaled(data, c);
  const auto fc = crt::fit(data_c, crt::Estimation::ML);
  CHECK(crt::model_based_variance(fc, data_c).delta_variance() ==
        doctest::Approx(c * c * crt::model_based_variance(f, data).delta_variance()).epsilon(1e-7));
  const auto a = crt::influence_values(f, data, 0.5);
  const auto b = crt::influence_values(fc, data_c, 0.5);
  for (std::size_t i = 0; i < a.if_values.size(); ++i)
    CHECK(b.if_values[i] == doctest::Approx(c * a.if_values[i]).epsilon(1e-6));
}

TEST_CASE("influence-function variance approaches 4 / denom at pi = 0.5") {
  crt::ScenarioConfig cfg;
  cfg.scenario = 3;
  cfg.m = 500;
  cfg.master_seed = 5;
  double ratio = 0.0;
  const int reps = 10;
  for (int r = 0; r < reps; ++r) {
    const auto trial = crt::gen_trial(cfg, static_cast<std::uint64_t>(r));
    const auto f = crt::fit(trial.data, crt::Estimation::ML);
    const auto inf = crt::influence_values(f, trial.data, 0.5);
    ratio += inf.v_hat / (4.0 / inf.denom_hat);
    double mean = 0.0;
    for (double v : inf.if_values) mean += v;
    mean /= static_cast<double>(inf.if_values.size());
    CHECK(std::abs(mean) < 4.0 * std::sqrt(inf.v_hat / 500.0));
  }
  CHECK(ratio / reps == doctest::Approx(1.0).epsilon(0.10));
}

TEST_CASE("analytic asymptotic variances") {
  CHECK(crt::balanced_true_variance(25.0, 1.0, 8.0) == doctest::Approx(16.5));
  CHECK(std::sqrt(crt::balanced_true_variance(25.0, 1.0, 8.0) / 200.0) == doctest::Approx(0.287).epsilon(0.002));
  CHECK(crt::balanced_true_variance(3.0, 0.0, 6.0) == doctest::Approx(2.0));
  CHECK(crt::balanced_true_variance(25.0, 1.0, 1e9) == doctest::Approx(4.0).epsilon(1e-6));

  CHECK(crt::cluster_level_true_variance(25.0, 1.0, crt::SizeDistribution::point(8.0)) ==
        doctest::Approx(crt::balanced_true_variance(25.0, 1.0, 8.0)).epsilon(1e-14));
  double direct = 0.0;
  for (int k = 4; k <= 12; ++k) direct += (25.0 + k) / k;
  direct *= 4.0 / 9.0;
  CHECK(crt::cluster_level_true_variance(25.0, 1.0, crt::SizeDistribution::uniform(4, 12)) ==
        doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("Jensen and Hoelder inequalities over a grid") {
  std::vector<crt::SizeDistribution> dists{
      crt::SizeDistribution::uniform(4, 12), crt::SizeDistribution::uniform(2, 3),
      crt::SizeDistribution::uniform(1, 100), crt::SizeDistribution{{2, 50}, {0.9, 0.1}},
      crt::SizeDistribution::point(7.0)};
  for (double s : {0.1, 1.0, 25.0, 400.0}) {
    for (double t : {0.0, 0.05, 1.0, 30.0}) {
      for (const auto& d : dists) {
        const double en = d.expect([](double n) { return n; });
        const double e_w = d.expect([&](double n) { return n / (s + n * t); });
        // Jensen: E[N/(s+Nt)] <= E[N]/(s+E[N]t), strict when t > 0 and N varies.
        const double jensen_gap = en / (s + en * t) - e_w;
        CHECK(jensen_gap >= -1e-14 * e_w);
        if (t > 0.0 && !d.degenerate()) CHECK(jensen_gap > 0.0);
        if (d.degenerate() || t == 0.0) CHECK(std::abs(jensen_gap) <= 1e-12 * e_w);

        // Hoelder: v_cl * E[N/(s+Nt)] / 4 >= 1, equality iff N is degenerate.
        const double h = crt::cluster_level_true_variance(s, t, d) * e_w / 4.0;
        CHECK(h >= 1.0 - 1e-12);
        if (d.degenerate()) CHECK(std::abs(h - 1.0) <= 1e-12);
        else CHECK(h > 1.0 + 1e-12);
        CHECK(crt::mixed_model_true_variance(s, t, d) <= crt::cluster_level_true_variance(s, t, d) * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("normal quantile and confidence intervals") {
  CHECK(std::abs(crt::normal_quantile(0.975) - 1.959963984540054) < 1e-12);
  CHECK(std::abs(crt::normal_quantile(0.5)) < 1e-15);
  CHECK(std::abs(crt::normal_quantile(1e-10) + 6.361340902404056) < 1e-10);
  CHECK(std::abs(crt::normal_quantile(0.9) - 1.2815515655446004) < 1e-12);
  CHECK(crt::normal_quantile(0.3) == doctest::Approx(-crt::normal_quantile(0.7)).epsilon(1e-14));

  auto [lo, hi] = crt::confidence_interval(0.0, 1.0, 0.95);
  CHECK(lo == doctest::Approx(-1.959964).epsilon(1e-6));
  CHECK(hi == doctest::Approx(1.959964).epsilon(1e-6));
  auto [a, b] = crt::confidence_interval(2.5, 0.0, 0.95);
  CHECK(a == 2.5);
  CHECK(b == 2.5);
  double prev = 0.0;
  for (double level : {0.5, 0.9, 0.99, 0.999999}) {
    auto [l, h] = crt::confidence_interval(0.0, 1.0, level);
    CHECK(h - l > prev);
    prev = h - l;
  }
  const auto rep = crt::make_report(1.0, 0.5, 0.9, crt::VarianceMethod::Sandwich, "x");
  CHECK(rep.ci_low == 1.0 - crt::normal_quantile(0.95) * 0.5);
  CHECK(rep.ci_high == 1.0 + crt::normal_quantile(0.95) * 0.5);
  CHECK(rep.ci_low <= rep.delta_hat);
}
