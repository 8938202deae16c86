#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "crt/analysis.hpp"
#include "crt/clanova.hpp"
#include "crt/dataio.hpp"
#include "crt/dgp.hpp"
#include "crt/errors.hpp"
#include "crt/mmfit.hpp"
#include "crt/simkit.hpp"
#include "crt/variance.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

crt::Estimation parse_estimation(const std::string& s) {
  if (s == "ml" || s == "ML") return crt::Estimation::ML;
  if (s == "reml" || s == "REML") return crt::Estimation::REML;
  throw crt::InvalidArgument("estimation must be 'ml' or 'reml', got '" + s + "'");
}

crt::Method parse_method(const std::string& s) {
  if (s == "mixed-unadj") return crt::Method::MixedUnadjusted;
  if (s == "mixed-ancova") return crt::Method::MixedAncova;
  if (s == "cluster-ancova") return crt::Method::ClusterAncova;
  throw crt::InvalidArgument("unknown method '" + s + "'");
}

// Long-format arrays -> clusters in order of first appearance.
crt::TrialDataset make_dataset(const std::vector<std::string>& cluster, const std::vector<int>& treatment,
                               const std::vector<double>& y, std::optional<Eigen::MatrixXd> x,
                               std::vector<std::string> names) {
  const std::size_t n = cluster.size();
  if (treatment.size() != n || y.size() != n) {
    throw crt::InvalidArgument("cluster, treatment and y must have the same length");
  }
  const Eigen::Index p = x ? x->cols() : 0;
  if (x && static_cast<std::size_t>(x->rows()) != n) {
    throw crt::InvalidArgument("covariate matrix must have one row per individual");
  }
  if (names.empty()) {
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names.size()) != p) {
    throw crt::InvalidArgument("covariate_names must match the number of covariate columns");
  }

  crt::TrialDataset data;
  data.covariate_names = std::move(names);
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, fresh] = index.try_emplace(cluster[i], data.clusters.size());
    if (fresh) {
      crt::ClusterRecord rec;
      rec.cluster_id = cluster[i];
      rec.treatment = treatment[i];
      data.clusters.push_back(std::move(rec));
      members.emplace_back();
    } else if (data.clusters[it->second].treatment != treatment[i]) {
      throw crt::InconsistentTreatment("cluster '" + cluster[i] + "' has rows in both arms");
    }
    members[it->second].push_back(i);
  }
  for (std::size_t c = 0; c < data.clusters.size(); ++c) {
    auto& rec = data.clusters[c];
    rec.covariates.resize(static_cast<Eigen::Index>(members[c].size()), p);
    for (std::size_t r = 0; r < members[c].size(); ++r) {
      rec.outcomes.push_back(y[members[c][r]]);
      if (p > 0) rec.covariates.row(static_cast<Eigen::Index>(r)) = x->row(static_cast<Eigen::Index>(members[c][r]));
    }
  }
  data.validate_structure();
  return data;
}

py::dict report_dict(const crt::EstimateReport& r) {
  return py::dict("estimator"_a = r.estimator_label, "variance"_a = std::string(crt::to_string(r.variance_method)),
                  "estimate"_a = r.delta_hat, "se"_a = r.se, "ci_low"_a = r.ci_low, "ci_high"_a = r.ci_high,
                  "level"_a = r.level);
}

py::dict metrics_row_dict(const crt::MetricsRow& r) {
  return py::dict("estimator"_a = r.label, "bias"_a = r.bias, "emp_se"_a = r.emp_se, "ase"_a = r.ase, "cp"_a = r.cp,
                  "re"_a = r.re, "mcse_bias"_a = r.mcse_bias, "mcse_emp_se"_a = r.mcse_emp_se,
                  "mcse_ase"_a = r.mcse_ase, "mcse_cp"_a = r.mcse_cp, "mcse_re"_a = r.mcse_re,
                  "n_converged"_a = r.n_converged, "n_reps"_a = r.n_reps);
}

template <class Table>
std::string render(const Table& t, const std::string& format) {
  std::ostringstream out;
  crt::write_report(t, crt::parse_report_format(format), out);
  return out.str();
}

crt::ScenarioConfig make_config(int scenario, std::size_t m, std::uint64_t seed, double pi, bool gamma,
                                std::size_t superpop_n, std::optional<std::string> assignment) {
  crt::ScenarioConfig c;
  c.scenario = scenario;
  c.m = m;
  c.master_seed = seed;
  c.pi = pi;
  c.add_gamma = gamma;
  c.superpop_n = superpop_n;
  if (assignment) {
    if (*assignment == "simple") c.assignment = crt::Scheme::Simple;
    else if (*assignment == "stratified") c.assignment = crt::Scheme::Stratified;
    else throw crt::ConfigError("assignment must be 'simple' or 'stratified'");
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mixed-model and cluster-level ANCOVA for cluster randomized trials";

  auto base = py::register_exception<crt::Error>(m, "CrtError", PyExc_RuntimeError);
  py::register_exception<crt::InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<crt::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<crt::SingularDesign>(m, "SingularDesign", base.ptr());
  py::register_exception<crt::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<crt::NoConvergedReps>(m, "NoConvergedReps", base.ptr());

  py::class_<crt::TrialDataset>(m, "TrialDataset")
      .def(py::init(&make_dataset), "cluster"_a, "treatment"_a, "y"_a, "x"_a = py::none(),
           "covariate_names"_a = std::vector<std::string>{},
           "Build from long-format arrays; clusters keep their order of first appearance.")
      .def_property_readonly("num_clusters", &crt::TrialDataset::num_clusters)
      .def_property_readonly("num_covariates", &crt::TrialDataset::num_covariates)
      .def_property_readonly("num_individuals", &crt::TrialDataset::num_individuals)
      .def_readonly("covariate_names", &crt::TrialDataset::covariate_names)
      .def_property_readonly("cluster_sizes",
                             [](const crt::TrialDataset& d) {
                               std::vector<std::size_t> s;
                               for (const auto& c : d.clusters) s.push_back(c.size());
                               return s;
                             })
      .def_property_readonly("treatments",
                             [](const crt::TrialDataset& d) {
                               std::vector<int> s;
                               for (const auto& c : d.clusters) s.push_back(c.treatment);
                               return s;
                             })
      .def("drop_covariates", [](const crt::TrialDataset& d) { return crt::drop_covariates(d); })
      .def("fingerprint", [](const crt::TrialDataset& d) { return crt::dataset_fingerprint(d); })
      .def("write_csv", [](const crt::TrialDataset& d, const std::string& path) { crt::write_trial(d, path); },
           "path"_a)
      .def("__repr__", [](const crt::TrialDataset& d) {
        return "<TrialDataset clusters=" + std::to_string(d.num_clusters()) +
               " individuals=" + std::to_string(d.num_individuals()) +
               " covariates=" + std::to_string(d.num_covariates()) + ">";
      });

  m.def(
      "read_trial",
      [](const std::string& path, const std::string& cluster, const std::string& treatment,
         const std::string& outcome, const std::vector<std::string>& covariates,
         std::optional<std::string> stratum, char delimiter) {
        crt::SchemaMap s;
        s.cluster_col = cluster;
        s.treatment_col = treatment;
        s.outcome_col = outcome;
        s.covariate_cols = covariates;
        s.stratum_col = std::move(stratum);
        s.delimiter = delimiter;
        auto r = crt::read_trial(path, s);
        py::dict rep("rows_read"_a = r.report.rows_read, "dropped_rows"_a = r.report.dropped_rows,
                     "imputed_cells"_a = r.report.imputed_cells, "removed_clusters"_a = r.report.removed_clusters);
        return py::make_tuple(std::move(r.data), rep);
      },
      "path"_a, "cluster"_a = "cluster", "treatment"_a = "treatment", "outcome"_a = "y",
      "covariates"_a = std::vector<std::string>{}, "stratum"_a = py::none(), "delimiter"_a = ',',
      "Read a long-format file. Returns (dataset, ingest report).");

  py::class_<crt::MixedFit>(m, "MixedFit")
      .def_readonly("beta", &crt::MixedFit::beta)
      .def_readonly("sigma2", &crt::MixedFit::sigma2_hat)
      .def_readonly("tau2", &crt::MixedFit::tau2_hat)
      .def_readonly("loglik", &crt::MixedFit::loglik)
      .def_readonly("converged", &crt::MixedFit::converged)
      .def_readonly("tau2_on_boundary", &crt::MixedFit::tau2_on_boundary)
      .def_readonly("has_singleton_clusters", &crt::MixedFit::has_singleton_clusters)
      .def_readonly("iterations", &crt::MixedFit::iterations)
      .def_property_readonly("delta_hat", &crt::MixedFit::delta_hat)
      .def_property_readonly("estimation",
                             [](const crt::MixedFit& f) { return std::string(crt::to_string(f.estimation_mode)); })
      .def("__repr__", [](const crt::MixedFit& f) {
        std::ostringstream s;
        s << "<MixedFit " << crt::to_string(f.estimation_mode) << " delta=" << f.delta_hat()
          << " sigma2=" << f.sigma2_hat << " tau2=" << f.tau2_hat << ">";
        return s.str();
      });

  m.def(
      "fit", [](const crt::TrialDataset& d, const std::string& estimation) { return crt::fit(d, parse_estimation(estimation)); },
      "data"_a, "estimation"_a = "ml", "Random-intercept linear mixed model of y on (1, A, X).");
  m.def(
      "gls_beta",
      [](const crt::TrialDataset& d, double sigma2, double tau2) { return crt::gls_beta(d, {sigma2, tau2}); },
      "data"_a, "sigma2"_a, "tau2"_a);
  m.def(
      "profile_loglik",
      [](const crt::TrialDataset& d, double sigma2, double tau2, const std::string& estimation) {
        return crt::profile_loglik(d, {sigma2, tau2}, parse_estimation(estimation));
      },
      "data"_a, "sigma2"_a, "tau2"_a, "estimation"_a = "ml");
  m.def(
      "model_based_variance",
      [](const crt::MixedFit& f, const crt::TrialDataset& d, const std::string& df) {
        crt::DfAdjustment a = crt::DfAdjustment::Auto;
        if (df == "always") a = crt::DfAdjustment::Always;
        else if (df == "never") a = crt::DfAdjustment::Never;
        else if (df != "auto") throw crt::InvalidArgument("df must be 'auto', 'always' or 'never'");
        return crt::model_based_variance(f, d, a).matrix;
      },
      "fit"_a, "data"_a, "df"_a = "auto");
  m.def(
      "sandwich_variance", [](const crt::MixedFit& f, const crt::TrialDataset& d) { return crt::sandwich_variance(f, d).matrix; },
      "fit"_a, "data"_a);
  m.def(
      "influence_values",
      [](const crt::MixedFit& f, const crt::TrialDataset& d, double pi) {
        const auto r = crt::influence_values(f, d, pi);
        return py::dict("if_values"_a = r.if_values, "v_hat"_a = r.v_hat, "denom_hat"_a = r.denom_hat);
      },
      "fit"_a, "data"_a, "pi"_a);

  m.def(
      "fit_cluster_ancova",
      [](const crt::TrialDataset& d, const std::string& variance, double level) {
        if (variance != "classical" && variance != "robust") {
          throw crt::InvalidArgument("variance must be 'classical' or 'robust'");
        }
        const auto f = crt::fit_cluster_ancova(
            d, variance == "robust" ? crt::ClusterVariance::Robust : crt::ClusterVariance::Classical, level);
        py::dict out = report_dict(f.report);
        out["alpha"] = f.alpha;
        out["covariance"] = f.covariance;
        return out;
      },
      "data"_a, "variance"_a = "classical", "level"_a = 0.95);
  m.def(
      "projection_gap", [](const crt::TrialDataset& d) { return crt::projection_gap(d); }, "data"_a);

  m.def(
      "analyze",
      [](const crt::TrialDataset& d, const std::vector<std::string>& methods, const std::string& estimation,
         const std::string& variance, std::optional<double> pi, double level, const std::string& format) {
        crt::AnalysisOptions o;
        o.methods.clear();
        for (const auto& s : methods) o.methods.push_back(parse_method(s));
        o.estimation = parse_estimation(estimation);
        if (variance != "model" && variance != "sandwich") {
          throw crt::InvalidArgument("variance must be 'model' or 'sandwich'");
        }
        o.sandwich = variance == "sandwich";
        o.pi = pi;
        o.level = level;
        const auto t = crt::analyze(d, o);
        if (!format.empty()) return py::object(py::str(render(t, format)));
        py::list rows;
        for (std::size_t i = 0; i < t.reports.size(); ++i) {
          py::dict r = report_dict(t.reports[i]);
          r["pvr"] = t.pvr[i];
          rows.append(r);
        }
        return py::object(rows);
      },
      "data"_a, "methods"_a = std::vector<std::string>{"mixed-unadj", "mixed-ancova", "cluster-ancova"},
      "estimation"_a = "ml", "variance"_a = "model", "pi"_a = py::none(), "level"_a = 0.95, "format"_a = "",
      "Fit the requested estimators. Returns a list of row dicts, or the rendered table when "
      "format is 'csv' or 'markdown'.");

  py::class_<crt::ScenarioConfig>(m, "ScenarioConfig")
      .def(py::init(&make_config), "scenario"_a, "m"_a = 200, "seed"_a = 1, "pi"_a = 0.5, "gamma"_a = false,
           "superpop_n"_a = 0, "assignment"_a = py::none())
      .def_readonly("scenario", &crt::ScenarioConfig::scenario)
      .def_readonly("m", &crt::ScenarioConfig::m)
      .def_readonly("seed", &crt::ScenarioConfig::master_seed)
      .def_readonly("pi", &crt::ScenarioConfig::pi)
      .def_readonly("gamma", &crt::ScenarioConfig::add_gamma)
      .def_property_readonly("source_size", &crt::ScenarioConfig::source_size)
      .def_property_readonly("true_delta", &crt::ScenarioConfig::true_delta)
      .def("__repr__", [](const crt::ScenarioConfig& c) { return "<ScenarioConfig " + crt::describe(c) + ">"; });

  m.def(
      "gen_trial", [](const crt::ScenarioConfig& c, std::uint64_t rep) { return crt::gen_trial(c, rep).data; },
      "config"_a, "rep"_a = 0, "Observed data of replication `rep` (pure function of config and rep).");

  py::class_<crt::MetricsTable>(m, "MetricsTable")
      .def_readonly("title", &crt::MetricsTable::title)
      .def_readonly("truth", &crt::MetricsTable::truth)
      .def_readonly("level", &crt::MetricsTable::level)
      .def_property_readonly("rows",
                             [](const crt::MetricsTable& t) {
                               py::list rows;
                               for (const auto& r : t.rows) rows.append(metrics_row_dict(r));
                               return rows;
                             })
      .def("to_markdown", [](const crt::MetricsTable& t) { return render(t, "markdown"); })
      .def("to_csv", [](const crt::MetricsTable& t) { return render(t, "csv"); })
      .def("__repr__", [](const crt::MetricsTable& t) { return render(t, "markdown"); });

  m.def(
      "run_study",
      [](const crt::ScenarioConfig& c, const std::vector<std::string>& estimators, std::size_t reps, double level,
         unsigned threads) {
        std::vector<crt::EstimatorSpec> est;
        for (const auto& e : estimators) est.push_back(crt::parse_estimator(e));
        py::gil_scoped_release release;
        return crt::run_study(c, est, reps, level, threads);
      },
      "config"_a, "estimators"_a = std::vector<std::string>{"mixed-unadj", "mixed-ancova", "cluster-ancova"},
      "reps"_a = 1000, "level"_a = 0.95, "threads"_a = 0);
  m.def(
      "compare_ml_reml",
      [](const crt::ScenarioConfig& c, std::size_t reps, double level, unsigned threads) {
        py::gil_scoped_release release;
        return crt::compare_ml_reml(c, reps, level, threads);
      },
      "config"_a, "reps"_a = 1000, "level"_a = 0.95, "threads"_a = 0);
  m.def(
      "icc_estimate",
      [](const crt::ScenarioConfig& c, std::size_t clusters) {
        crt::IccEstimate e;
        {
          py::gil_scoped_release release;
          e = crt::icc_estimate(c, clusters);
        }
        return py::dict("icc"_a = e.icc, "se"_a = e.se, "icc_observed"_a = e.icc_marginal,
                        "se_observed"_a = e.se_marginal, "clusters"_a = e.clusters);
      },
      "config"_a, "clusters"_a = 100000);
}
