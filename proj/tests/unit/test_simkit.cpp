#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "crt/errors.hpp"
#include "crt/simkit.hpp"
#include "doctest.h"

namespace {

bool same_table(const crt::MetricsTable& a, const crt::MetricsTable& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    auto eq = [](double u, double v) { return u == v || (std::isnan(u) && std::isnan(v)); };
    if (!(eq(x.bias, y.bias) && eq(x.emp_se, y.emp_se) && eq(x.ase, y.ase) && eq(x.cp, y.cp) &&
          eq(x.re, y.re) && eq(x.mcse_re, y.mcse_re) && x.n_converged == y.n_converged))
      return false;
  }
  return true;
}

crt::ReplicationResult fake(std::uint64_t rep, std::vector<std::pair<double, double>> est) {
  crt::ReplicationResult r;
  r.rep_index = rep;
  for (auto [d, s] : est) r.estimates.push_back({d, s, true, {}});
  return r;
}

}  // namespace

TEST_CASE("estimator tokens") {
  auto e = crt::parse_estimator("mixed-ancova:reml:sandwich");
  CHECK(e.method == crt::Method::MixedAncova);
  CHECK(e.estimation == crt::Estimation::REML);
  CHECK(e.variance == crt::VarianceChoice::Sandwich);
  CHECK(crt::parse_estimator("cluster-ancova:robust").variance == crt::VarianceChoice::ClusterRobust);
  CHECK(crt::parse_estimator("mixed-unadj").method == crt::Method::MixedUnadjusted);
  CHECK_THROWS_AS(crt::parse_estimator("cluster-ancova:sandwich"), crt::InvalidArgument);
  CHECK_THROWS_AS(crt::parse_estimator("mixed-ancova:robust"), crt::InvalidArgument);
  CHECK_THROWS_AS(crt::parse_estimator("ols"), crt::InvalidArgument);
  CHECK_THROWS_AS(crt::parse_estimator("mixed-ancova:fast"), crt::InvalidArgument);
  CHECK(crt::default_estimators().size() == 3);
  CHECK(crt::ml_reml_estimators().size() == 4);
}

TEST_CASE("replications share one dataset across estimators") {
  crt::ScenarioConfig cfg;
  cfg.scenario = 3;
  cfg.m = 30;
  const auto est = crt::default_estimators();
  const auto a = crt::run_replication(cfg, est, 3);
  const auto b = crt::run_replication(cfg, {est[1]}, 3);
  CHECK(a.data_fingerprint == b.data_fingerprint);
  CHECK(a.estimates[1].delta_hat == b.estimates[0].delta_hat);
  CHECK(a.estimates.size() == 3);
  for (const auto& e : a.estimates) CHECK(e.error.empty());
}

TEST_CASE("failures are recorded, not thrown") {
  crt::ScenarioConfig cfg;
  cfg.scenario = 1;
  cfg.m = 3;  // cluster ANCOVA needs m > p + 2
  const auto r = crt::run_replication(cfg, crt::default_estimators(), 0);
  CHECK_FALSE(r.estimates[2].converged);
  CHECK_FALSE(r.estimates[2].error.empty());
}

TEST_CASE("metrics do not depend on schedule or order") {
  crt::ScenarioConfig cfg;
  cfg.scenario = 1;
  cfg.m = 20;
  cfg.master_seed = 4;
  const auto est = crt::default_estimators();
  std::vector<std::uint64_t> reps(40);
  for (std::uint64_t i = 0; i < reps.size(); ++i) reps[i] = i;
  const auto base = crt::summarize(crt::run_replications(cfg, est, reps, 1), est, 0.0);
  auto shuffled = reps;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  const auto again = crt::summarize(crt::run_replications(cfg, est, shuffled, 3), est, 0.0);
  CHECK(same_table(base, again));
  CHECK(base.rows[0].re == 1.0);
  CHECK(base.rows[0].mcse_re == 0.0);
  CHECK(same_table(base, crt::run_study(cfg, est, 40, 0.95, 2)));
}

TEST_CASE("metric formulas") {
  const std::vector<crt::EstimatorSpec> est{crt::parse_estimator("mixed-unadj"),
                                            crt::parse_estimator("mixed-ancova")};
  // Reference deltas (1, 3), comparator (0, 4); truth 1; se 1 everywhere.
  std::vector<crt::ReplicationResult> rs{fake(1, {{3.0, 1.0}, {4.0, 1.0}}),
                                         fake(0, {{1.0, 1.0}, {0.0, 1.0}}),
                                         fake(2, {{2.0, 1.0}, {2.0, 1.0}})};
  const auto t = crt::summarize(rs, est, 1.0);
  const auto& r0 = t.rows[0];
  CHECK(r0.bias == doctest::Approx(1.0));
  CHECK(r0.emp_se == doctest::Approx(1.0));
  CHECK(r0.ase == doctest::Approx(1.0));
  CHECK(r0.cp == doctest::Approx(2.0 / 3.0));  // |3 - 1| > 1.96
  CHECK(r0.mcse_bias == doctest::Approx(1.0 / std::sqrt(3.0)));
  CHECK(r0.mcse_emp_se == doctest::Approx(1.0 / 2.0));
  CHECK(r0.mcse_cp == doctest::Approx(std::sqrt((2.0 / 9.0) / 3.0)));
  CHECK(t.rows[1].re == doctest::Approx(1.0 / 4.0));
  CHECK(t.rows[1].emp_se == doctest::Approx(2.0));
}

TEST_CASE("infinite standard errors always cover") {
  const std::vector<crt::EstimatorSpec> est{crt::parse_estimator("mixed-unadj")};
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<crt::ReplicationResult> rs{fake(0, {{5.0, inf}}), fake(1, {{-7.0, inf}})};
  CHECK(crt::summarize(rs, est, 0.0).rows[0].cp == 1.0);
}

TEST_CASE("non-converged replications are excluded; none converged is an error") {
  const std::vector<crt::EstimatorSpec> est{crt::parse_estimator("mixed-unadj"),
                                            crt::parse_estimator("mixed-ancova")};
  auto a = fake(0, {{1.0, 1.0}, {1.0, 1.0}});
  auto b = fake(1, {{2.0, 1.0}, {9.0, 1.0}});
  auto c = fake(2, {{3.0, 1.0}, {3.0, 1.0}});
  b.estimates[1].converged = false;
  const auto t = crt::summarize({a, b, c}, est, 0.0);
  CHECK(t.rows[1].n_converged == 2);
  CHECK(t.rows[1].n_reps == 3);
  CHECK(t.rows[1].emp_se == doctest::Approx(std::sqrt(2.0)));

  for (auto* r : {&a, &b, &c}) r->estimates[1].converged = false;
  CHECK_THROWS_AS(crt::summarize({a, b, c}, est, 0.0), crt::NoConvergedReps);
  CHECK_THROWS_AS(crt::run_study(crt::ScenarioConfig{}, est, 1), crt::InvalidArgument);
}

TEST_CASE("describe") {
  crt::ScenarioConfig cfg;
  cfg.scenario = 2;
  cfg.master_seed = 7;
  const std::string d = crt::describe(cfg);
  CHECK(d.find("Scenario 2") != std::string::npos);
  CHECK(d.find("stratified") != std::string::npos);
  CHECK(d.find("n=8") != std::string::npos);
}
