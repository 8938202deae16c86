#include "crt/analysis.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "crt/errors.hpp"

namespace crt {

namespace {

std::string method_label(Method m, Estimation e) {
  switch (m) {
    case Method::MixedUnadjusted: return "mixed-model unadjusted (" + std::string(to_string(e)) + ")";
    case Method::MixedAncova: return "mixed-model ANCOVA (" + std::string(to_string(e)) + ")";
    case Method::ClusterAncova: return "cluster-level ANCOVA";
  }
  return "unknown";
}

}  // namespace

AnalysisTable analyze(const TrialDataset& data, const AnalysisOptions& options) {
  data.validate();
  if (options.methods.empty()) throw InvalidArgument("no methods requested");
  if (!(options.level > 0.0 && options.level < 1.0)) {
    throw InvalidArgument("confidence level must lie in (0, 1)");
  }
  if (options.pi && !(*options.pi > 0.0 && *options.pi < 1.0)) {
    throw InvalidPi("randomization probability must lie in (0, 1)");
  }
  for (Method m : options.methods) {
    if (m != Method::MixedUnadjusted && data.num_covariates() == 0) {
      throw InvalidArgument(method_label(m, options.estimation) + " needs at least one covariate");
    }
  }

  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  AnalysisTable table;
  std::optional<double> unadj_var;
  std::vector<std::pair<std::size_t, double>> adjusted;  // row, variance

  for (Method m : options.methods) {
    const std::string label = method_label(m, options.estimation);
    if (m == Method::ClusterAncova) {
      auto f = fit_cluster_ancova(
          data, options.sandwich ? ClusterVariance::Robust : ClusterVariance::Classical,
          options.level);
      f.report.estimator_label = label;
      adjusted.emplace_back(table.reports.size(), f.report.se * f.report.se);
      table.reports.push_back(std::move(f.report));
      table.pvr.push_back(kNaN);
      continue;
    }
    const TrialDataset target = m == Method::MixedUnadjusted ? drop_covariates(data) : data;
    const MixedFit f = fit(target, options.estimation);
    const CoefficientCovariance cov =
        options.sandwich ? sandwich_variance(f, target) : model_based_variance(f, target);
    const double var = std::max(cov.delta_variance(), 0.0);
    table.reports.push_back(make_report(
        f.delta_hat(), std::sqrt(var), options.level,
        options.sandwich ? VarianceMethod::Sandwich : VarianceMethod::ModelBased, label));
    table.pvr.push_back(kNaN);
    if (m == Method::MixedUnadjusted) unadj_var = var;
    else adjusted.emplace_back(table.reports.size() - 1, var);

    if (options.pi) {
      const auto inf = influence_values(f, target, *options.pi);
      const double se = std::sqrt(inf.v_hat / static_cast<double>(target.num_clusters()));
      table.reports.push_back(
          make_report(f.delta_hat(), se, options.level, VarianceMethod::Influence, label));
      table.pvr.push_back(kNaN);
    }
  }
  if (unadj_var && *unadj_var > 0.0) {
    for (const auto& [row, var] : adjusted) table.pvr[row] = 1.0 - var / *unadj_var;
  }
  return table;
}

}  // namespace crt
