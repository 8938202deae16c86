#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crt {

/// Observed data for one cluster.
struct ClusterRecord {
  std::string cluster_id;
  int treatment = 0;                 // A_i in {0, 1}
  std::vector<double> outcomes;      // Y_i^o, length N_i
  Eigen::MatrixXd covariates;        // X_i^o, N_i x p
  std::optional<std::string> stratum;

  std::size_t size() const noexcept { return outcomes.size(); }
};

struct TrialDataset {
  std::vector<ClusterRecord> clusters;
  std::vector<std::string> covariate_names;

  std::size_t num_clusters() const noexcept { return clusters.size(); }
  std::size_t num_covariates() const noexcept { return covariate_names.size(); }
  std::size_t num_individuals() const noexcept;

  /// Structural checks: nonempty clusters, binary treatment, covariate shapes
  /// matching covariate_names. Throws InvalidArgument.
  void validate_structure() const;

  /// validate_structure() plus at least one cluster per arm (SingularDesign).
  void validate() const;
};

/// Copy of `data` with all covariate columns removed (p = 0).
TrialDataset drop_covariates(const TrialDataset& data);

/// Stable 64-bit FNV-1a digest of the numeric content and arm labels.
std::uint64_t dataset_fingerprint(const TrialDataset& data);

}  // namespace crt
