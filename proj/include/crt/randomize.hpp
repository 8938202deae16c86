#pragma once

#include <span>
#include <string>
#include <vector>

#include "crt/rng.hpp"

namespace crt {

enum class Scheme { Simple, Stratified };

struct AssignmentPlan {
  Scheme scheme = Scheme::Simple;
  double pi = 0.5;
  std::vector<int> strata;  // one label per cluster when Stratified

  std::vector<int> assign(std::size_t m, Stream& rng) const;
};

/// i.i.d. Bernoulli(pi) cluster assignment.
std::vector<int> simple_assign(std::size_t m, double pi, Stream& rng);

/// Within each stratum of size n_s, treats exactly floor(pi n_s) clusters
/// plus one more with probability frac(pi n_s); the treated set is a
/// uniformly random subset. Strata are processed in order of first
/// appearance. Marginally P(A_i = 1) = pi for every cluster.
std::vector<int> stratified_assign(std::span<const int> strata, double pi, Stream& rng);

/// String-labelled variant; labels are mapped to integers by first appearance.
std::vector<int> stratified_assign(std::span<const std::string> strata, double pi, Stream& rng);

}  // namespace crt
