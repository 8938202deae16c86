#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "crt/analysis.hpp"
#include "crt/dataset.hpp"
#include "crt/simkit.hpp"
#include "crt/variance.hpp"

namespace crt {

/// Column mapping for long-format (one row per individual) input.
struct SchemaMap {
  std::string cluster_col = "cluster";
  std::string treatment_col = "treatment";
  std::string outcome_col = "y";
  std::vector<std::string> covariate_cols;
  std::optional<std::string> stratum_col;
  char delimiter = ',';
  std::vector<std::string> na_tokens{"", "NA", "."};

  bool is_na(const std::string& field) const;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t dropped_rows = 0;      // missing outcome
  std::size_t imputed_cells = 0;     // covariate cells replaced by the column mean
  std::size_t removed_clusters = 0;  // clusters left empty after dropping
};

struct IngestResult {
  TrialDataset data;
  IngestReport report;
};

/// Splits delimited text into records. Quoted fields may contain the
/// delimiter, doubled quotes and newlines. Each record carries the line it
/// started on. Throws ParseError on an unterminated quote.
struct TextRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<TextRecord> read_records(std::istream& in, char delimiter = ',');

/// Complete-case on the outcome, pooled mean imputation of covariates.
/// Clusters keep their order of first appearance.
/// Throws ParseError, InconsistentTreatment, EmptyDataset, IoError.
IngestResult read_trial(std::istream& in, const SchemaMap& schema);
IngestResult read_trial(const std::string& path, const SchemaMap& schema);

/// Writes `data` in long format with columns cluster, treatment, y, the
/// covariate names and (if any cluster has one) stratum. Values use 17
/// significant digits so that a re-read gives back the same doubles.
void write_trial(const TrialDataset& data, std::ostream& out);
void write_trial(const TrialDataset& data, const std::string& path);

enum class ReportFormat { CSV, Markdown };
ReportFormat parse_report_format(const std::string& name);

/// Numbers are rendered with %.6g, NaN as "NA".
std::string format_number(double v);
std::string csv_quote(const std::string& field, char delimiter = ',');

void write_report(const EstimateReport& report, ReportFormat format, std::ostream& out);
void write_report(const AnalysisTable& table, ReportFormat format, std::ostream& out);
void write_report(const MetricsTable& table, ReportFormat format, std::ostream& out);

/// File destinations. Throws IoError.
void write_report(const AnalysisTable& table, ReportFormat format, const std::string& path);
void write_report(const MetricsTable& table, ReportFormat format, const std::string& path);

}  // namespace crt
