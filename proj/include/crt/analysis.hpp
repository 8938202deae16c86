#pragma once

#include <optional>
#include <vector>

#include "crt/clanova.hpp"
#include "crt/dataset.hpp"
#include "crt/mmfit.hpp"
#include "crt/simkit.hpp"
#include "crt/variance.hpp"

namespace crt {

/// Estimates from a real-data analysis; `pvr` is parallel to `reports`,
/// NaN where it does not apply.
struct AnalysisTable {
  std::vector<EstimateReport> reports;
  std::vector<double> pvr;
};

struct AnalysisOptions {
  std::vector<Method> methods{Method::MixedUnadjusted, Method::MixedAncova,
                              Method::ClusterAncova};
  Estimation estimation = Estimation::ML;
  bool sandwich = false;      // mixed models: sandwich, cluster level: HC0
  std::optional<double> pi;   // adds influence-function SEs for mixed models
  double level = 0.95;
};

/// Fits the requested estimators on one dataset. Proportion variance
/// reduction 1 - Var_adj / Var_unadj is filled for the adjusted rows when the
/// unadjusted estimator is among the methods. Throws InvalidArgument when an
/// adjusted method is requested without covariates; fit errors propagate.
AnalysisTable analyze(const TrialDataset& data, const AnalysisOptions& options = {});

}  // namespace crt
