// crt-ancova: simulation studies, ML/REML comparison, data analysis and ICC
// diagnostics. Exit codes: 0 success, 2 usage or validation, 3 runtime.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crt/analysis.hpp"
#include "crt/dataio.hpp"
#include "crt/dgp.hpp"
#include "crt/errors.hpp"
#include "crt/simkit.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kRuntime = 3;

// Thrown for validation failures found after CLI11 parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct StudyFlags {
  int scenario = 0;
  std::size_t clusters = 200;
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  double pi = 0.5;
  bool gamma = false;
  std::size_t superpop_n = 0;
  std::string assignment;
  double level = 0.95;
  std::string out;
  std::string format = "markdown";
  std::string estimators = "mixed-unadj,mixed-ancova,cluster-ancova";
  unsigned threads = 0;

  crt::ScenarioConfig config() const {
    crt::ScenarioConfig c;
    c.scenario = scenario;
    c.m = clusters;
    c.master_seed = seed;
    c.pi = pi;
    c.add_gamma = gamma;
    c.superpop_n = superpop_n;
    if (assignment == "simple") c.assignment = crt::Scheme::Simple;
    else if (assignment == "stratified") c.assignment = crt::Scheme::Stratified;
    return c;
  }
};

void add_study_flags(CLI::App* cmd, StudyFlags& f, bool with_estimators) {
  cmd->add_option("--scenario", f.scenario, "Data-generating scenario (1, 2 or 3)")->required();
  cmd->add_option("--clusters", f.clusters, "Number of clusters m per trial")->capture_default_str();
  cmd->add_option("--reps", f.reps, "Monte Carlo replications (at least 2)")->capture_default_str();
  cmd->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  cmd->add_option("--pi", f.pi, "Randomization probability P(A = 1)")->capture_default_str();
  cmd->add_flag("--gamma", f.gamma, "Add the Gamma(25, 1) cluster effect to both potential outcomes");
  cmd->add_option("--superpop-n", f.superpop_n,
                  "Source units per cluster; 0 = largest cluster size (12 for scenarios 1 and 3, 8 for scenario 2)")
      ->capture_default_str();
  cmd->add_option("--assignment", f.assignment,
                  "Override the scenario's randomization scheme (simple or stratified)")
      ->check(CLI::IsMember({"simple", "stratified"}));
  cmd->add_option("--level", f.level, "Confidence level for coverage")->capture_default_str();
  if (with_estimators) {
    cmd->add_option("--estimators", f.estimators,
                    "Comma list of estimators: mixed-unadj, mixed-ancova, cluster-ancova, each "
                    "optionally followed by :ml|:reml and :model|:sandwich (mixed) or "
                    ":classical|:robust (cluster)")
        ->capture_default_str();
  }
  cmd->add_option("--out", f.out, "Write the table to this file instead of standard output");
  cmd->add_option("--format", f.format, "Output format (markdown or csv)")
      ->check(CLI::IsMember({"markdown", "md", "csv"}))
      ->capture_default_str();
  cmd->add_option("--threads", f.threads,
                  "Worker threads (default: CRT_ANCOVA_THREADS, else all logical cores)");
}

unsigned resolve_threads(CLI::App* cmd, unsigned flag) {
  if (cmd->count("--threads") > 0) return flag;
  if (const char* env = std::getenv("CRT_ANCOVA_THREADS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v >= 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("CRT_ANCOVA_THREADS is not a thread count: ") + env);
  }
  return 0;
}

void validate_study(const StudyFlags& f, const crt::ScenarioConfig& cfg) {
  cfg.validate();
  if (f.reps < 2) throw UsageError("--reps must be at least 2");
  if (!(f.level > 0.0 && f.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
}

void emit(const crt::MetricsTable& table, const StudyFlags& f) {
  const auto format = crt::parse_report_format(f.format);
  if (f.out.empty()) crt::write_report(table, format, std::cout);
  else crt::write_report(table, format, f.out);
}

int run_simulate(CLI::App* cmd, const StudyFlags& f) {
  const auto cfg = f.config();
  std::vector<crt::EstimatorSpec> est;
  for (const auto& tok : split(f.estimators, ',')) est.push_back(crt::parse_estimator(tok));
  if (est.empty()) throw UsageError("--estimators is empty");
  validate_study(f, cfg);
  const unsigned threads = resolve_threads(cmd, f.threads);
  emit(crt::run_study(cfg, est, f.reps, f.level, threads), f);
  return 0;
}

int run_compare(CLI::App* cmd, const StudyFlags& f) {
  const auto cfg = f.config();
  validate_study(f, cfg);
  const unsigned threads = resolve_threads(cmd, f.threads);
  emit(crt::compare_ml_reml(cfg, f.reps, f.level, threads), f);
  return 0;
}

struct AnalyzeFlags {
  std::string data;
  std::string cluster = "cluster";
  std::string treatment = "treatment";
  std::string outcome = "y";
  std::string covariates;
  std::string stratum;
  std::string method = "all";
  std::string estimation = "ml";
  std::string variance = "model";
  std::optional<double> pi;
  double level = 0.95;
  std::string out;
  std::string format = "markdown";
  char delimiter = ',';
};

int run_analyze(const AnalyzeFlags& f) {
  crt::SchemaMap schema;
  schema.cluster_col = f.cluster;
  schema.treatment_col = f.treatment;
  schema.outcome_col = f.outcome;
  schema.covariate_cols = split(f.covariates, ',');
  if (!f.stratum.empty()) schema.stratum_col = f.stratum;
  schema.delimiter = f.delimiter;

  crt::AnalysisOptions opt;
  if (f.method == "mixed-unadj") opt.methods = {crt::Method::MixedUnadjusted};
  else if (f.method == "mixed-ancova") opt.methods = {crt::Method::MixedAncova};
  else if (f.method == "cluster-ancova") opt.methods = {crt::Method::ClusterAncova};
  if (f.method != "mixed-unadj" && schema.covariate_cols.empty()) {
    throw UsageError("--method " + f.method + " needs --covariates");
  }
  opt.estimation = f.estimation == "reml" ? crt::Estimation::REML : crt::Estimation::ML;
  opt.sandwich = f.variance == "sandwich";
  opt.pi = f.pi;
  opt.level = f.level;
  if (!(f.level > 0.0 && f.level < 1.0)) throw UsageError("--level must lie in (0, 1)");
  if (f.pi && !(*f.pi > 0.0 && *f.pi < 1.0)) throw UsageError("--pi must lie in (0, 1)");
  const auto format = crt::parse_report_format(f.format);

  crt::IngestResult in;
  crt::AnalysisTable table;
  try {
    in = crt::read_trial(f.data, schema);
    std::cerr << "read " << in.report.rows_read << " rows, " << in.data.num_clusters()
              << " clusters; dropped " << in.report.dropped_rows << " rows with missing outcome, imputed "
              << in.report.imputed_cells << " covariate cells, removed "
              << in.report.removed_clusters << " empty clusters\n";
    table = crt::analyze(in.data, opt);
  } catch (const crt::InvalidArgument&) {
    throw;  // e.g. adjusted method on a file without covariates
  } catch (const crt::Error& e) {
    // Everything else past flag validation is a runtime failure.
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  if (f.out.empty()) crt::write_report(table, format, std::cout);
  else crt::write_report(table, format, f.out);
  return 0;
}

struct IccFlags {
  int scenario = 0;
  bool gamma = false;
  std::size_t superpop_n = 0;
  std::size_t mc_clusters = 100000;
  std::uint64_t seed = 1;
};

int run_icc(const IccFlags& f) {
  crt::ScenarioConfig cfg;
  cfg.scenario = f.scenario;
  cfg.add_gamma = f.gamma;
  cfg.superpop_n = f.superpop_n;
  cfg.master_seed = f.seed;
  cfg.validate();
  const auto est = crt::icc_estimate(cfg, f.mc_clusters);
  std::cout << "scenario " << f.scenario << (f.gamma ? " (Gamma)" : "") << ", source size "
            << cfg.source_size() << ", " << est.clusters << " Monte Carlo clusters, seed "
            << f.seed << "\n"
            << "icc " << crt::format_number(est.icc) << " (se " << crt::format_number(est.se)
            << ")  [control potential outcomes]\n"
            << "icc_observed " << crt::format_number(est.icc_marginal) << " (se "
            << crt::format_number(est.se_marginal) << ")  [observed outcomes]\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-model and cluster-level ANCOVA for cluster randomized trials", "crt-ancova"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "crt-ancova 0.1.0");

  StudyFlags sim_flags, cmp_flags;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo study of the estimators under one scenario");
  add_study_flags(sim, sim_flags, true);
  auto* cmp = app.add_subcommand("compare-reml", "Paired ML/REML study (unadjusted and ANCOVA)");
  add_study_flags(cmp, cmp_flags, false);

  AnalyzeFlags an_flags;
  auto* an = app.add_subcommand("analyze", "Estimate the treatment effect from a long-format data file");
  an->add_option("--data", an_flags.data, "Input file, one row per individual")->required();
  an->add_option("--cluster", an_flags.cluster, "Cluster id column")->capture_default_str();
  an->add_option("--treatment", an_flags.treatment, "Treatment column (0/1)")->capture_default_str();
  an->add_option("--outcome", an_flags.outcome, "Outcome column")->capture_default_str();
  an->add_option("--covariates", an_flags.covariates, "Comma list of covariate columns");
  an->add_option("--stratum", an_flags.stratum, "Optional stratum column");
  an->add_option("--method", an_flags.method, "mixed-unadj, mixed-ancova, cluster-ancova or all")
      ->check(CLI::IsMember({"mixed-unadj", "mixed-ancova", "cluster-ancova", "all"}))
      ->capture_default_str();
  an->add_option("--estimation", an_flags.estimation, "Variance-component estimation (ml or reml)")
      ->check(CLI::IsMember({"ml", "reml"}))
      ->capture_default_str();
  an->add_option("--variance", an_flags.variance,
                 "model or sandwich (cluster-level ANCOVA: classical or HC0)")
      ->check(CLI::IsMember({"model", "sandwich"}))
      ->capture_default_str();
  an->add_option("--pi", an_flags.pi,
                 "Design randomization probability; adds influence-function SEs for the mixed models");
  an->add_option("--level", an_flags.level, "Confidence level")->capture_default_str();
  an->add_option("--delimiter", an_flags.delimiter, "Field delimiter")->capture_default_str();
  an->add_option("--out", an_flags.out, "Write the table to this file instead of standard output");
  an->add_option("--format", an_flags.format, "Output format (markdown or csv)")
      ->check(CLI::IsMember({"markdown", "md", "csv"}))
      ->capture_default_str();

  IccFlags icc_flags;
  auto* icc = app.add_subcommand("icc", "Monte Carlo intracluster correlation of a scenario");
  icc->add_option("--scenario", icc_flags.scenario, "Data-generating scenario (1, 2 or 3)")->required();
  icc->add_flag("--gamma", icc_flags.gamma, "Add the Gamma(25, 1) cluster effect");
  icc->add_option("--superpop-n", icc_flags.superpop_n,
                  "Source units per cluster; 0 = largest cluster size")
      ->capture_default_str();
  icc->add_option("--mc-clusters", icc_flags.mc_clusters, "Monte Carlo clusters (at least 1000)")
      ->capture_default_str();
  icc->add_option("--seed", icc_flags.seed, "Master seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  CLI::App* active = *sim ? sim : *cmp ? cmp : *an ? an : icc;
  auto usage = [&](const std::exception& e) {
    std::cerr << "error: " << e.what() << "\nrun '" << app.get_name() << " " << active->get_name()
              << " --help' for usage\n";
    return kUsage;
  };
  try {
    if (*sim) return run_simulate(sim, sim_flags);
    if (*cmp) return run_compare(cmp, cmp_flags);
    if (*an) return run_analyze(an_flags);
    if (*icc) return run_icc(icc_flags);
  } catch (const UsageError& e) {
    return usage(e);
  } catch (const crt::ConfigError& e) {
    return usage(e);
  } catch (const crt::InvalidArgument& e) {
    return usage(e);
  } catch (const crt::InvalidPi& e) {
    return usage(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
