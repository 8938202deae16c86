#include "crt/simkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "crt/clanova.hpp"
#include "crt/errors.hpp"
#include "crt/variance.hpp"

namespace crt {

void EstimatorSpec::validate() const {
  const bool cluster_variance =
      variance == VarianceChoice::ClusterClassical || variance == VarianceChoice::ClusterRobust;
  if (is_mixed() == cluster_variance) {
    throw InvalidArgument("estimator '" + label +
                          "': cluster variances go with cluster-level ANCOVA only");
  }
}

std::vector<EstimatorSpec> default_estimators() {
  return {
      {Method::MixedUnadjusted, Estimation::ML, VarianceChoice::ModelBased,
       "mixed-model unadjusted"},
      {Method::MixedAncova, Estimation::ML, VarianceChoice::ModelBased, "mixed-model ANCOVA"},
      {Method::ClusterAncova, Estimation::ML, VarianceChoice::ClusterClassical,
       "cluster-level ANCOVA"},
  };
}

std::vector<EstimatorSpec> ml_reml_estimators() {
  return {
      {Method::MixedUnadjusted, Estimation::ML, VarianceChoice::ModelBased, "unadjusted ML"},
      {Method::MixedUnadjusted, Estimation::REML, VarianceChoice::ModelBased, "unadjusted REML"},
      {Method::MixedAncova, Estimation::ML, VarianceChoice::ModelBased, "ANCOVA ML"},
      {Method::MixedAncova, Estimation::REML, VarianceChoice::ModelBased, "ANCOVA REML"},
  };
}

EstimatorSpec parse_estimator(const std::string& token) {
  std::vector<std::string> parts;
  std::stringstream ss(token);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.empty()) throw InvalidArgument("empty estimator token");

  EstimatorSpec spec;
  if (parts[0] == "mixed-unadj") {
    spec.method = Method::MixedUnadjusted;
  } else if (parts[0] == "mixed-ancova") {
    spec.method = Method::MixedAncova;
  } else if (parts[0] == "cluster-ancova") {
    spec.method = Method::ClusterAncova;
    spec.variance = VarianceChoice::ClusterClassical;
  } else {
    throw InvalidArgument("unknown estimator '" + parts[0] + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& opt = parts[i];
    if (opt == "ml") spec.estimation = Estimation::ML;
    else if (opt == "reml") spec.estimation = Estimation::REML;
    else if (opt == "model") spec.variance = VarianceChoice::ModelBased;
    else if (opt == "sandwich") spec.variance = VarianceChoice::Sandwich;
    else if (opt == "classical") spec.variance = VarianceChoice::ClusterClassical;
    else if (opt == "robust") spec.variance = VarianceChoice::ClusterRobust;
    else throw InvalidArgument("unknown estimator option '" + opt + "' in '" + token + "'");
  }
  spec.label = token;
  spec.validate();
  return spec;
}

ReplicationResult run_replication(const ScenarioConfig& config,
                                  const std::vector<EstimatorSpec>& estimators,
                                  std::uint64_t rep_index) {
  const GeneratedTrial trial = gen_trial(config, rep_index);
  const TrialDataset& data = trial.data;
  std::optional<TrialDataset> unadjusted;

  ReplicationResult out;
  out.rep_index = rep_index;
  out.data_fingerprint = dataset_fingerprint(data);
  out.estimates.reserve(estimators.size());

  std::map<std::pair<Method, Estimation>, MixedFit> fits;
  for (const auto& spec : estimators) {
    EstimateOutcome est;
    try {
      if (spec.is_mixed()) {
        const TrialDataset* target = &data;
        if (spec.method == Method::MixedUnadjusted) {
          if (!unadjusted) unadjusted = drop_covariates(data);
          target = &*unadjusted;
        }
        const auto key = std::make_pair(spec.method, spec.estimation);
        auto it = fits.find(key);
        if (it == fits.end()) it = fits.emplace(key, fit(*target, spec.estimation)).first;
        const MixedFit& f = it->second;
        const CoefficientCovariance cov = spec.variance == VarianceChoice::Sandwich
                                              ? sandwich_variance(f, *target)
                                              : model_based_variance(f, *target);
        est.delta_hat = f.delta_hat();
        est.se = std::sqrt(std::max(cov.delta_variance(), 0.0));
        est.converged = f.converged;
      } else {
        const ClusterAncovaFit f =
            fit_cluster_ancova(data, spec.variance == VarianceChoice::ClusterRobust
                                         ? ClusterVariance::Robust
                                         : ClusterVariance::Classical);
        est.delta_hat = f.report.delta_hat;
        est.se = f.report.se;
        est.converged = std::isfinite(est.se);
      }
    } catch (const std::exception& e) {
      est.converged = false;
      est.error = e.what();
    }
    out.estimates.push_back(std::move(est));
  }
  return out;
}

namespace {

struct Moments {
  double n = 0.0, sum = 0.0, sum_sq = 0.0;
  void add(double x) {
    n += 1.0;
    sum += x;
    sum_sq += x * x;
  }
  double mean() const { return sum / n; }
  double variance() const { return (sum_sq - sum * sum / n) / (n - 1.0); }
};

// Sample variance with one observation removed.
double loo_variance(const Moments& m, double x) {
  const double n = m.n - 1.0;
  const double s = m.sum - x;
  return (m.sum_sq - x * x - s * s / n) / (n - 1.0);
}

}  // namespace

MetricsTable summarize(std::vector<ReplicationResult> results,
                       const std::vector<EstimatorSpec>& estimators, double truth, double level,
                       int reference) {
  std::sort(results.begin(), results.end(),
            [](const auto& a, const auto& b) { return a.rep_index < b.rep_index; });
  if (reference < 0) {
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      if (estimators[e].method == Method::MixedUnadjusted &&
          estimators[e].estimation == Estimation::ML) {
        reference = static_cast<int>(e);
        break;
      }
    }
  }

  MetricsTable table;
  table.truth = truth;
  table.level = level;
  std::vector<double> emp_se(estimators.size());
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    Moments delta, se;
    double covered = 0.0;
    for (const auto& r : results) {
      const auto& est = r.estimates.at(e);
      if (!est.converged) continue;
      delta.add(est.delta_hat);
      se.add(est.se);
      const auto [lo, hi] = confidence_interval(est.delta_hat, est.se, level);
      if (lo <= truth && truth <= hi) covered += 1.0;
    }
    if (delta.n < 2.0) {
      throw NoConvergedReps("estimator '" + estimators[e].label +
                            "' converged in fewer than two replications");
    }
    MetricsRow row;
    row.label = estimators[e].label;
    row.n_reps = results.size();
    row.n_converged = static_cast<std::size_t>(delta.n);
    const double k = delta.n;
    row.bias = delta.mean() - truth;
    row.emp_se = std::sqrt(std::max(delta.variance(), 0.0));
    row.ase = se.mean();
    row.cp = covered / k;
    row.mcse_bias = row.emp_se / std::sqrt(k);
    row.mcse_emp_se = row.emp_se / std::sqrt(2.0 * (k - 1.0));
    row.mcse_ase = std::isfinite(row.ase) ? std::sqrt(std::max(se.variance(), 0.0) / k) : 0.0;
    row.mcse_cp = std::sqrt(row.cp * (1.0 - row.cp) / k);
    emp_se[e] = row.emp_se;
    table.rows.push_back(std::move(row));
  }

  for (std::size_t e = 0; e < estimators.size(); ++e) {
    MetricsRow& row = table.rows[e];
    if (reference < 0) {
      row.re = std::numeric_limits<double>::quiet_NaN();
      row.mcse_re = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const auto ref = static_cast<std::size_t>(reference);
    row.re = (emp_se[ref] * emp_se[ref]) / (emp_se[e] * emp_se[e]);

    // Paired delete-one jackknife for the variance ratio.
    Moments a, b;
    for (const auto& r : results) {
      if (r.estimates[ref].converged && r.estimates[e].converged) {
        a.add(r.estimates[ref].delta_hat);
        b.add(r.estimates[e].delta_hat);
      }
    }
    if (a.n < 3.0) {
      row.mcse_re = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    std::vector<double> loo;
    loo.reserve(static_cast<std::size_t>(a.n));
    for (const auto& r : results) {
      if (r.estimates[ref].converged && r.estimates[e].converged) {
        loo.push_back(loo_variance(a, r.estimates[ref].delta_hat) /
                      loo_variance(b, r.estimates[e].delta_hat));
      }
    }
    double mean = 0.0;
    for (double v : loo) mean += v;
    mean /= static_cast<double>(loo.size());
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    const double nj = static_cast<double>(loo.size());
    row.mcse_re = std::sqrt((nj - 1.0) / nj * ss);
  }
  return table;
}

std::vector<ReplicationResult> run_replications(const ScenarioConfig& config,
                                                const std::vector<EstimatorSpec>& estimators,
                                                std::vector<std::uint64_t> rep_indices,
                                                unsigned threads) {
  config.validate();
  if (estimators.empty()) throw InvalidArgument("no estimators requested");
  for (const auto& e : estimators) e.validate();

  std::vector<ReplicationResult> results(rep_indices.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, std::max<std::size_t>(rep_indices.size(), 1)));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rep_indices.size();) {
      results[i] = run_replication(config, estimators, rep_indices[i]);
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return results;
}

MetricsTable run_study(const ScenarioConfig& config, const std::vector<EstimatorSpec>& estimators,
                       std::size_t n_reps, double level, unsigned threads) {
  if (n_reps < 2) throw InvalidArgument("a study needs at least two replications");
  std::vector<std::uint64_t> reps(n_reps);
  for (std::size_t r = 0; r < n_reps; ++r) reps[r] = r;
  MetricsTable table = summarize(run_replications(config, estimators, std::move(reps), threads),
                                 estimators, config.true_delta(), level);
  table.title = describe(config);
  return table;
}

MetricsTable compare_ml_reml(const ScenarioConfig& config, std::size_t n_reps, double level,
                             unsigned threads) {
  return run_study(config, ml_reml_estimators(), n_reps, level, threads);
}

std::string describe(const ScenarioConfig& config) {
  std::ostringstream os;
  os << "Scenario " << config.scenario << (config.add_gamma ? " (Gamma)" : "")
     << ", m=" << config.m << ", pi=" << config.pi << ", n=" << config.source_size()
     << ", assignment=" << (config.scheme() == Scheme::Stratified ? "stratified" : "simple")
     << ", seed=" << config.master_seed;
  return os.str();
}

}  // namespace crt
