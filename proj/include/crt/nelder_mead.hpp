#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>

namespace crt::optim {

/// Box-constrained Nelder-Mead minimiser for small fixed dimension.
/// Trial points are clamped into [lower, upper] coordinatewise.
template <std::size_t Dim>
struct NelderMeadResult {
  std::array<double, Dim> x{};
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

template <std::size_t Dim>
struct NelderMeadOptions {
  std::array<double, Dim> step{};
  std::array<double, Dim> lower{};
  std::array<double, Dim> upper{};
  double x_tol = 1e-8;   // max vertex distance from the best vertex
  double f_tol = 1e-10;  // relative spread of function values
  int max_iter = 500;
};

template <std::size_t Dim, class F>
NelderMeadResult<Dim> nelder_mead(F&& f, std::array<double, Dim> start,
                                  const NelderMeadOptions<Dim>& opt) {
  using Point = std::array<double, Dim>;
  constexpr std::size_t kVerts = Dim + 1;
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  NelderMeadResult<Dim> res;
  auto clamp = [&](Point p) {
    for (std::size_t d = 0; d < Dim; ++d) p[d] = std::clamp(p[d], opt.lower[d], opt.upper[d]);
    return p;
  };
  auto eval = [&](const Point& p) {
    ++res.evaluations;
    const double v = f(p);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::array<Point, kVerts> x;
  std::array<double, kVerts> fx;
  x[0] = clamp(start);
  for (std::size_t d = 0; d < Dim; ++d) {
    x[d + 1] = x[0];
    x[d + 1][d] += opt.step[d];
    if (x[d + 1][d] > opt.upper[d]) x[d + 1][d] = x[0][d] - opt.step[d];
    x[d + 1] = clamp(x[d + 1]);
  }
  for (std::size_t v = 0; v < kVerts; ++v) fx[v] = eval(x[v]);

  std::array<std::size_t, kVerts> order;
  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    for (std::size_t v = 0; v < kVerts; ++v) order[v] = v;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
    const std::size_t best = order.front(), worst = order.back(),
                      second = order[kVerts - 2];

    double diameter = 0.0;
    for (std::size_t v = 0; v < kVerts; ++v) {
      for (std::size_t d = 0; d < Dim; ++d) {
        diameter = std::max(diameter, std::abs(x[v][d] - x[best][d]));
      }
    }
    const double spread = fx[worst] - fx[best];
    if (diameter < opt.x_tol && spread <= opt.f_tol * (1.0 + std::abs(fx[best]))) {
      res.converged = true;
      break;
    }

    Point centroid{};
    for (std::size_t v = 0; v < kVerts; ++v) {
      if (v == worst) continue;
      for (std::size_t d = 0; d < Dim; ++d) centroid[d] += x[v][d] / Dim;
    }
    auto along = [&](double t) {
      Point p;
      for (std::size_t d = 0; d < Dim; ++d) p[d] = centroid[d] + t * (x[worst][d] - centroid[d]);
      return clamp(p);
    };

    const Point xr = along(-kReflect);
    const double fr = eval(xr);
    if (fr < fx[best]) {
      const Point xe = along(-kExpand);
      const double fe = eval(xe);
      if (fe < fr) {
        x[worst] = xe;
        fx[worst] = fe;
      } else {
        x[worst] = xr;
        fx[worst] = fr;
      }
      continue;
    }
    if (fr < fx[second]) {
      x[worst] = xr;
      fx[worst] = fr;
      continue;
    }
    const bool outside = fr < fx[worst];
    const Point xc = along(outside ? -kContract : kContract);
    const double fc = eval(xc);
    if (fc < (outside ? fr : fx[worst])) {
      x[worst] = xc;
      fx[worst] = fc;
      continue;
    }
    for (std::size_t v = 0; v < kVerts; ++v) {
      if (v == best) continue;
      for (std::size_t d = 0; d < Dim; ++d) x[v][d] = x[best][d] + kShrink * (x[v][d] - x[best][d]);
      x[v] = clamp(x[v]);
      fx[v] = eval(x[v]);
    }
  }

  std::size_t best = 0;
  for (std::size_t v = 1; v < kVerts; ++v) {
    if (fx[v] < fx[best]) best = v;
  }
  res.x = x[best];
  res.value = fx[best];
  return res;
}

}  // namespace crt::optim
