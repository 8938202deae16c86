#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crt/dgp.hpp"
#include "crt/mmfit.hpp"

namespace crt {

enum class Method { MixedUnadjusted, MixedAncova, ClusterAncova };
enum class VarianceChoice { ModelBased, Sandwich, ClusterClassical, ClusterRobust };

struct EstimatorSpec {
  Method method = Method::MixedUnadjusted;
  Estimation estimation = Estimation::ML;
  VarianceChoice variance = VarianceChoice::ModelBased;
  std::string label;

  /// Throws InvalidArgument for incompatible method/variance pairs.
  void validate() const;
  bool is_mixed() const noexcept { return method != Method::ClusterAncova; }
};

/// The three estimators of the simulation tables with ML and model-based SEs.
std::vector<EstimatorSpec> default_estimators();

/// Parses tokens such as "mixed-unadj", "mixed-ancova:reml", "mixed-ancova:ml:sandwich",
/// "cluster-ancova", "cluster-ancova:robust". Throws InvalidArgument.
EstimatorSpec parse_estimator(const std::string& token);

struct EstimateOutcome {
  double delta_hat = 0.0;
  double se = 0.0;
  bool converged = false;
  std::string error;  // nonempty when the estimator threw
};

struct ReplicationResult {
  std::uint64_t rep_index = 0;
  std::uint64_t data_fingerprint = 0;
  std::vector<EstimateOutcome> estimates;  // parallel to the estimator list
};

/// One simulate -> fit -> report cycle. Every estimator sees the same data;
/// estimator failures are recorded, never thrown.
ReplicationResult run_replication(const ScenarioConfig& config,
                                  const std::vector<EstimatorSpec>& estimators,
                                  std::uint64_t rep_index);

struct MetricsRow {
  std::string label;
  double bias = 0.0;
  double emp_se = 0.0;
  double ase = 0.0;
  double cp = 0.0;
  double re = 0.0;  // NaN when the table has no unadjusted ML reference
  double mcse_bias = 0.0;
  double mcse_emp_se = 0.0;
  double mcse_ase = 0.0;
  double mcse_cp = 0.0;
  double mcse_re = 0.0;
  std::size_t n_converged = 0;
  std::size_t n_reps = 0;
};

struct MetricsTable {
  std::string title;
  double truth = 0.0;
  double level = 0.95;
  std::vector<MetricsRow> rows;
};

/// Aggregates replication results (sorted by rep_index first, so the output
/// does not depend on how they were produced). RE is relative to
/// `reference` (index into estimators; -1 picks the first unadjusted ML
/// entry, if any). Throws NoConvergedReps.
MetricsTable summarize(std::vector<ReplicationResult> results,
                       const std::vector<EstimatorSpec>& estimators, double truth,
                       double level = 0.95, int reference = -1);

/// Runs replications 0..n_reps-1 on `threads` workers (0 = hardware
/// concurrency) and summarizes them.
std::vector<ReplicationResult> run_replications(const ScenarioConfig& config,
                                                const std::vector<EstimatorSpec>& estimators,
                                                std::vector<std::uint64_t> rep_indices,
                                                unsigned threads = 0);

MetricsTable run_study(const ScenarioConfig& config, const std::vector<EstimatorSpec>& estimators,
                       std::size_t n_reps, double level = 0.95, unsigned threads = 0);

/// Roster {unadjusted, ANCOVA} x {ML, REML}, RE against unadjusted ML.
std::vector<EstimatorSpec> ml_reml_estimators();

MetricsTable compare_ml_reml(const ScenarioConfig& config, std::size_t n_reps,
                             double level = 0.95, unsigned threads = 0);

std::string describe(const ScenarioConfig& config);

}  // namespace crt
