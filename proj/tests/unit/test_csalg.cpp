#include <cmath>
#include <random>
#include <vector>

#include "crt/csalg.hpp"
#include "doctest.h"
#include "oracles.hpp"

using crt::CompoundSymmetry;

namespace {

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> random_vector(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(gen);
  return v;
}

}  // namespace

TEST_CASE("compound symmetry rejects invalid components") {
  CHECK_THROWS_AS(CompoundSymmetry(0.0, 1.0), crt::InvalidArgument);
  CHECK_THROWS_AS(CompoundSymmetry(-1.0, 1.0), crt::InvalidArgument);
  CHECK_THROWS_AS(CompoundSymmetry(1.0, -0.1), crt::InvalidArgument);
  CHECK_THROWS_AS(CompoundSymmetry(NAN, 0.0), crt::InvalidArgument);
  CHECK_NOTHROW(CompoundSymmetry(1.0, 0.0));
  CHECK(CompoundSymmetry(3.0, 1.0).icc() == doctest::Approx(0.25));
}

TEST_CASE("inverse apply: closed-form examples") {
  auto a = crt::cs_inverse_apply({4.0, 0.0}, std::vector<double>{8.0, 4.0});
  CHECK(a[0] == doctest::Approx(2.0));
  CHECK(a[1] == doctest::Approx(1.0));

  auto b = crt::cs_inverse_apply({1.0, 1.0}, std::vector<double>{1.0, 1.0, 1.0});
  for (double x : b) CHECK(x == doctest::Approx(0.25));
}

TEST_CASE("inverse apply matches the dense inverse") {
  std::mt19937_64 gen(11);
  const CompoundSymmetry cs(2.0, 3.0);
  const auto v = random_vector(gen, 5);
  const Eigen::VectorXd dense = oracle::dense_sigma(2.0, 3.0, 5).fullPivLu().solve(as_eigen(v));
  const Eigen::VectorXd fast = as_eigen(crt::cs_inverse_apply(cs, v));
  CHECK((fast - dense).norm() / dense.norm() < 1e-10);
}

TEST_CASE("log-determinant examples") {
  CHECK(crt::cs_logdet({1.7, 0.4}, 1) == doctest::Approx(std::log(2.1)).epsilon(1e-14));
  CHECK(crt::cs_logdet({1.0, 0.0}, 5) == doctest::Approx(0.0));
  CHECK(crt::cs_logdet({2.0, 3.0}, 4) == doctest::Approx(3.0 * std::log(2.0) + std::log(14.0)).epsilon(1e-12));
  CHECK(crt::cs_logdet({2.0, 3.0}, 4) == doctest::Approx(4.718499).epsilon(1e-6));
}

TEST_CASE("quadratic form examples") {
  const CompoundSymmetry cs(2.0, 0.5);
  for (std::size_t n : {1u, 3u, 8u}) {
    const std::vector<double> ones(n, 1.0);
    CHECK(crt::cs_quadform(cs, ones, ones) == doctest::Approx(n / (2.0 + n * 0.5)));
  }
  CHECK(crt::cs_quadform({4.0, 0.0}, std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK_THROWS_AS(crt::cs_quadform(cs, std::vector<double>{1, 2}, std::vector<double>{1}),
                  crt::InvalidArgument);

  std::mt19937_64 gen(5);
  const auto u = random_vector(gen, 6), w = random_vector(gen, 6);
  const Eigen::MatrixXd inv = oracle::dense_sigma(2.0, 0.5, 6).fullPivLu().inverse();
  const double dense = as_eigen(u).dot(inv * as_eigen(w));
  CHECK(std::abs(crt::cs_quadform(cs, u, w) - dense) < 1e-10);
  CHECK(crt::cs_quadform(cs, u, w) == doctest::Approx(crt::cs_quadform(cs, w, u)).epsilon(1e-14));
}

TEST_CASE("dense agreement over the parameter grid") {
  std::mt19937_64 gen(2024);
  const std::vector<double> sigmas{1e-3, 0.1, 1.0, 37.0, 1e3};
  const std::vector<double> taus{0.0, 1e-3, 0.5, 10.0, 1e3};
  const std::vector<std::size_t> sizes{1, 2, 3, 7, 20, 50};
  double worst_inv = 0.0, worst_det = 0.0, worst_quad = 0.0;
  for (double s : sigmas) {
    for (double t : taus) {
      const CompoundSymmetry cs(s, t);
      for (std::size_t n : sizes) {
        const Eigen::MatrixXd sigma = oracle::dense_sigma(s, t, n);
        const auto nn = static_cast<Eigen::Index>(n);
        // Sigma * (columns of Sigma^{-1}) must be the identity.
        Eigen::MatrixXd inv(nn, nn);
        for (Eigen::Index j = 0; j < nn; ++j) {
          std::vector<double> e(n, 0.0);
          e[static_cast<std::size_t>(j)] = 1.0;
          inv.col(j) = as_eigen(crt::cs_inverse_apply(cs, e));
        }
        worst_inv = std::max(worst_inv, (sigma * inv - Eigen::MatrixXd::Identity(nn, nn)).cwiseAbs().maxCoeff());

        const double dense_logdet = sigma.llt().matrixLLT().diagonal().array().log().sum() * 2.0;
        worst_det = std::max(worst_det, std::abs(crt::cs_logdet(cs, n) - dense_logdet));

        const auto u = random_vector(gen, n), w = random_vector(gen, n);
        const Eigen::VectorXd siw = sigma.llt().solve(as_eigen(w));
        const double dense = as_eigen(u).dot(siw);
        worst_quad = std::max(worst_quad, std::abs(crt::cs_quadform(cs, u, w) - dense) /
                                              std::max(1.0, std::abs(dense)));
        CHECK(crt::cs_quadform(cs, u, u) >= 0.0);
      }
    }
  }
  CHECK(worst_inv < 1e-9);
  CHECK(worst_det < 1e-9);
  CHECK(worst_quad < 1e-9);
}
