#include "crt/randomize.hpp"

#include <cmath>
#include <map>
#include <random>

#include "crt/errors.hpp"

namespace crt {

namespace {

void check_pi(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw InvalidPi("pi must lie strictly inside (0, 1)");
}

}  // namespace

std::vector<int> simple_assign(std::size_t m, double pi, Stream& rng) {
  check_pi(pi);
  std::vector<int> a(m);
  for (auto& ai : a) ai = rng.uniform() < pi ? 1 : 0;
  return a;
}

std::vector<int> stratified_assign(std::span<const int> strata, double pi, Stream& rng) {
  check_pi(pi);
  std::vector<int> order;
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    auto& list = members[strata[i]];
    if (list.empty()) order.push_back(strata[i]);
    list.push_back(i);
  }

  std::vector<int> a(strata.size(), 0);
  for (int label : order) {
    auto& idx = members[label];
    const double target = pi * static_cast<double>(idx.size());
    std::size_t k = static_cast<std::size_t>(std::floor(target));
    if (rng.uniform() < target - std::floor(target)) ++k;
    // Partial Fisher-Yates: the first k positions become a uniform k-subset.
    for (std::size_t j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, idx.size() - 1);
      std::swap(idx[j], idx[pick(rng)]);
      a[idx[j]] = 1;
    }
  }
  return a;
}

std::vector<int> stratified_assign(std::span<const std::string> strata, double pi,
                                   Stream& rng) {
  std::map<std::string, int> ids;
  std::vector<int> labels;
  labels.reserve(strata.size());
  for (const auto& s : strata) {
    auto [it, fresh] = ids.try_emplace(s, static_cast<int>(ids.size()));
    labels.push_back(it->second);
  }
  return stratified_assign(std::span<const int>(labels), pi, rng);
}

std::vector<int> AssignmentPlan::assign(std::size_t m, Stream& rng) const {
  if (scheme == Scheme::Simple) return simple_assign(m, pi, rng);
  if (strata.size() != m) throw InvalidArgument("stratified plan needs one stratum per cluster");
  return stratified_assign(std::span<const int>(strata), pi, rng);
}

}  // namespace crt
