#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "crt/dataset.hpp"
#include "crt/randomize.hpp"
#include "crt/rng.hpp"

namespace crt {

/// Simulation scenarios.
///   1: Y = X - mean_n(X) + delta + eps, N ~ U{4..12}, simple randomization.
///   2: Y = 2S(A + X + mean_n(X)) + eps, N = 8, stratified on S ~ Bern(0.6);
///      analysed with covariates (X, S).
///   3: Y = X + delta + eps, N ~ U{4..12}, simple randomization.
/// X ~ N(0, 4), delta ~ N(0, 1), eps ~ N(0, 25). The Gamma variant adds
/// gamma_i ~ Gamma(shape 25, scale 1) to both potential outcomes.
struct ScenarioConfig {
  int scenario = 1;
  std::size_t m = 200;
  std::size_t superpop_n = 0;  // source units per cluster; 0 = largest cluster size
  double pi = 0.5;
  bool add_gamma = false;
  std::uint64_t master_seed = 1;
  std::optional<Scheme> assignment;  // overrides the scenario's scheme
  bool force_stratum_zero = false;   // diagnostic: every S_i = 0

  /// Throws ConfigError.
  void validate() const;
  Scheme scheme() const;
  double true_delta() const;
  std::size_t max_cluster_size() const;
  /// superpop_n, or max_cluster_size() when it is left at 0 (12 for
  /// scenarios 1 and 3, 8 for scenario 2).
  std::size_t source_size() const;
};

/// Complete (partly unobservable) data for one cluster's source population.
struct CompleteClusterDraw {
  std::vector<double> y1, y0;          // potential outcomes, length n
  std::vector<double> x;               // covariate, length n
  std::vector<int> enrollment;         // M, length n, sum = N_i
  std::vector<std::size_t> enrolled;   // indices with M = 1, ascending (row order)
  double delta = 0.0;
  std::vector<double> eps;
  std::optional<double> gamma;
  std::optional<int> stratum;
};

struct GeneratedTrial {
  TrialDataset data;
  double true_delta = 0.0;
  std::vector<CompleteClusterDraw> complete;  // kept only when requested
};

/// Uniform random N-subset of {0..n-1} (partial Fisher-Yates). Throws BadSize.
std::vector<std::size_t> enroll(std::size_t n, std::size_t size, Stream& rng);

/// Draws replication `rep_index`. Randomness comes from streams keyed by
/// (master_seed, scenario, rep_index, purpose), so the result depends only
/// on the arguments.
GeneratedTrial gen_trial(const ScenarioConfig& config, std::uint64_t rep_index,
                         bool keep_complete = false);

struct IccEstimate {
  double icc = 0.0;           // control potential outcomes Y(0)
  double se = 0.0;
  double icc_marginal = 0.0;  // observed outcomes, treatment marginalized
  double se_marginal = 0.0;
  std::size_t clusters = 0;
};

/// Monte Carlo ICC: correlation of two outcomes in the same cluster, pooled
/// over all within-cluster pairs of enrolled units. Reported for Y(0) and for
/// the observed outcomes; the two coincide unless treatment enters the
/// outcome's dependence structure (scenario 2). SEs from 20 batch means.
IccEstimate icc_estimate(const ScenarioConfig& config, std::size_t n_clusters_mc);

}  // namespace crt
