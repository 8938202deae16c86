#include "crt/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <tuple>
#include <utility>

#include "crt/errors.hpp"

namespace crt {

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 3) {
    throw ConfigError("scenario must be 1, 2 or 3, got " + std::to_string(scenario));
  }
  if (m < 2) throw ConfigError("need at least two clusters");
  if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("pi must lie in (0, 1)");
  if (source_size() < max_cluster_size()) {
    throw ConfigError("superpopulation size " + std::to_string(superpop_n) +
                      " is below the largest cluster size " +
                      std::to_string(max_cluster_size()));
  }
}

Scheme ScenarioConfig::scheme() const {
  if (assignment) return *assignment;
  return scenario == 2 ? Scheme::Stratified : Scheme::Simple;
}

double ScenarioConfig::true_delta() const { return scenario == 2 ? 1.2 : 0.0; }

std::size_t ScenarioConfig::max_cluster_size() const { return scenario == 2 ? 8 : 12; }

std::size_t ScenarioConfig::source_size() const {
  return superpop_n ? superpop_n : max_cluster_size();
}

std::vector<std::size_t> enroll(std::size_t n, std::size_t size, Stream& rng) {
  if (size < 1 || size > n) {
    throw BadSize("cannot enroll " + std::to_string(size) + " of " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t j = 0; j < size; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
    std::swap(idx[j], idx[pick(rng)]);
  }
  idx.resize(size);
  return idx;
}

GeneratedTrial gen_trial(const ScenarioConfig& config, std::uint64_t rep_index,
                         bool keep_complete) {
  config.validate();
  const Stream root = Stream(config.master_seed)
                          .derive("scenario", static_cast<std::uint64_t>(config.scenario))
                          .derive("rep", rep_index);
  Stream size_rng = root.derive("sizes");
  Stream strata_rng = root.derive("strata");
  Stream assign_rng = root.derive("assign");
  Stream outcome_rng = root.derive("outcomes");
  Stream enroll_rng = root.derive("enroll");
  Stream gamma_rng = root.derive("gamma");

  const std::size_t m = config.m;
  const std::size_t n = config.source_size();
  const int scen = config.scenario;

  std::vector<int> strata(m, 0);
  if (scen == 2) {
    std::bernoulli_distribution s_dist(0.6);
    for (auto& s : strata) s = s_dist(strata_rng) ? 1 : 0;
    if (config.force_stratum_zero) std::fill(strata.begin(), strata.end(), 0);
  }
  const std::vector<int> treat = config.scheme() == Scheme::Stratified
                                     ? stratified_assign(std::span<const int>(strata),
                                                         config.pi, assign_rng)
                                     : simple_assign(m, config.pi, assign_rng);

  std::normal_distribution<double> x_dist(0.0, 2.0), delta_dist(0.0, 1.0),
      eps_dist(0.0, 5.0);
  std::gamma_distribution<double> gamma_dist(25.0, 1.0);
  std::uniform_int_distribution<std::size_t> size_dist(4, 12);

  GeneratedTrial out;
  out.true_delta = config.true_delta();
  out.data.covariate_names = scen == 2 ? std::vector<std::string>{"X", "S"}
                                       : std::vector<std::string>{"X"};
  out.data.clusters.reserve(m);
  if (keep_complete) out.complete.reserve(m);

  for (std::size_t i = 0; i < m; ++i) {
    CompleteClusterDraw w;
    w.x.resize(n);
    w.eps.resize(n);
    for (auto& v : w.x) v = x_dist(outcome_rng);
    for (auto& v : w.eps) v = eps_dist(outcome_rng);
    w.delta = scen == 2 ? 0.0 : delta_dist(outcome_rng);
    if (config.add_gamma) w.gamma = gamma_dist(gamma_rng);
    const double g = w.gamma.value_or(0.0);
    const double x_mean = std::accumulate(w.x.begin(), w.x.end(), 0.0) / static_cast<double>(n);

    w.y0.resize(n);
    w.y1.resize(n);
    if (scen == 2) {
      w.stratum = strata[i];
      const double s2 = 2.0 * strata[i];
      for (std::size_t j = 0; j < n; ++j) {
        w.y0[j] = s2 * (w.x[j] + x_mean) + w.eps[j] + g;
        w.y1[j] = s2 * (1.0 + w.x[j] + x_mean) + w.eps[j] + g;
      }
    } else {
      const double centre = scen == 1 ? x_mean : 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        w.y0[j] = w.x[j] - centre + w.delta + w.eps[j] + g;
        w.y1[j] = w.y0[j];
      }
    }

    const std::size_t size = scen == 2 ? 8 : size_dist(size_rng);
    // Enrolled units are kept in source order.
    w.enrolled = enroll(n, size, enroll_rng);
    std::sort(w.enrolled.begin(), w.enrolled.end());
    w.enrollment.assign(n, 0);
    for (auto j : w.enrolled) w.enrollment[j] = 1;

    ClusterRecord rec;
    rec.cluster_id = std::to_string(i + 1);
    rec.treatment = treat[i];
    rec.outcomes.reserve(size);
    rec.covariates.resize(static_cast<Eigen::Index>(size), scen == 2 ? 2 : 1);
    const std::vector<std::size_t>& units = w.enrolled;
    for (std::size_t r = 0; r < units.size(); ++r) {
      const std::size_t j = units[r];
      rec.outcomes.push_back(treat[i] == 1 ? w.y1[j] : w.y0[j]);
      rec.covariates(static_cast<Eigen::Index>(r), 0) = w.x[j];
      if (scen == 2) rec.covariates(static_cast<Eigen::Index>(r), 1) = strata[i];
    }
    if (scen == 2) rec.stratum = std::to_string(strata[i]);
    out.data.clusters.push_back(std::move(rec));
    if (keep_complete) out.complete.push_back(std::move(w));
  }
  return out;
}

namespace {

// Pairwise within-cluster correlation, estimate and batch-means SE.
std::pair<double, double> pairwise_icc(const std::vector<std::vector<double>>& groups) {
  auto block = [&](std::size_t lo, std::size_t hi) {
    double sum = 0.0, count = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      for (double y : groups[i]) sum += y;
      count += static_cast<double>(groups[i].size());
    }
    const double mean = sum / count;
    double ss = 0.0, cross = 0.0, pairs = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double t = 0.0, t2 = 0.0;
      for (double y : groups[i]) {
        const double d = y - mean;
        t += d;
        t2 += d * d;
      }
      const double ni = static_cast<double>(groups[i].size());
      ss += t2;
      cross += t * t - t2;
      pairs += ni * (ni - 1.0);
    }
    return (cross / pairs) / (ss / count);
  };

  const double icc = block(0, groups.size());
  constexpr std::size_t kBatches = 20;
  std::vector<double> batch(kBatches);
  const std::size_t per = groups.size() / kBatches;
  for (std::size_t b = 0; b < kBatches; ++b) {
    const std::size_t hi = b + 1 == kBatches ? groups.size() : (b + 1) * per;
    batch[b] = block(b * per, hi);
  }
  const double bm = std::accumulate(batch.begin(), batch.end(), 0.0) / kBatches;
  double bv = 0.0;
  for (double v : batch) bv += (v - bm) * (v - bm);
  return {icc, std::sqrt(bv / (kBatches - 1) / kBatches)};
}

}  // namespace

IccEstimate icc_estimate(const ScenarioConfig& config, std::size_t n_clusters_mc) {
  if (n_clusters_mc < 1000) throw ConfigError("icc_estimate needs at least 1000 clusters");
  ScenarioConfig cfg = config;
  cfg.m = n_clusters_mc;
  const GeneratedTrial trial = gen_trial(cfg, 0, true);

  std::vector<std::vector<double>> observed, control;
  observed.reserve(trial.complete.size());
  control.reserve(trial.complete.size());
  for (std::size_t i = 0; i < trial.complete.size(); ++i) {
    observed.push_back(trial.data.clusters[i].outcomes);
    const CompleteClusterDraw& c = trial.complete[i];
    std::vector<double> y0;
    y0.reserve(c.enrolled.size());
    for (std::size_t j : c.enrolled) y0.push_back(c.y0[j]);
    control.push_back(std::move(y0));
  }

  IccEstimate est;
  est.clusters = n_clusters_mc;
  std::tie(est.icc, est.se) = pairwise_icc(control);
  std::tie(est.icc_marginal, est.se_marginal) = pairwise_icc(observed);
  return est;
}

}  // namespace crt
