#include "crt/dataset.hpp"

#include <cstring>

#include "crt/errors.hpp"

namespace crt {

std::size_t TrialDataset::num_individuals() const noexcept {
  std::size_t total = 0;
  for (const auto& c : clusters) total += c.size();
  return total;
}

void TrialDataset::validate_structure() const {
  const auto p = static_cast<Eigen::Index>(covariate_names.size());
  if (clusters.empty()) throw InvalidArgument("dataset has no clusters");
  for (const auto& c : clusters) {
    if (c.outcomes.empty()) {
      throw InvalidArgument("cluster '" + c.cluster_id + "' has no observations");
    }
    if (c.treatment != 0 && c.treatment != 1) {
      throw InvalidArgument("cluster '" + c.cluster_id + "' has non-binary treatment");
    }
    if (c.covariates.cols() != p) {
      throw InvalidArgument("cluster '" + c.cluster_id + "' has " +
                            std::to_string(c.covariates.cols()) +
                            " covariate columns, expected " + std::to_string(p));
    }
    if (c.covariates.rows() != static_cast<Eigen::Index>(c.outcomes.size())) {
      throw InvalidArgument("cluster '" + c.cluster_id +
                            "': covariate rows differ from outcome count");
    }
  }
}

void TrialDataset::validate() const {
  validate_structure();
  bool treated = false, control = false;
  for (const auto& c : clusters) {
    (c.treatment == 1 ? treated : control) = true;
  }
  if (!treated || !control) {
    throw SingularDesign("both arms must contain at least one cluster");
  }
}

TrialDataset drop_covariates(const TrialDataset& data) {
  TrialDataset out;
  out.clusters = data.clusters;
  for (auto& c : out.clusters) {
    c.covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(c.outcomes.size()), 0);
  }
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  void real(double x) { bytes(&x, sizeof x); }
  void integer(std::uint64_t x) { bytes(&x, sizeof x); }
};

}  // namespace

std::uint64_t dataset_fingerprint(const TrialDataset& data) {
  Fnv1a f;
  f.integer(data.clusters.size());
  f.integer(data.covariate_names.size());
  for (const auto& c : data.clusters) {
    f.integer(static_cast<std::uint64_t>(c.treatment));
    f.integer(c.outcomes.size());
    for (double y : c.outcomes) f.real(y);
    for (Eigen::Index j = 0; j < c.covariates.cols(); ++j) {
      for (Eigen::Index r = 0; r < c.covariates.rows(); ++r) f.real(c.covariates(r, j));
    }
  }
  return f.h;
}

}  // namespace crt
