#include "crt/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "crt/errors.hpp"
#include "linalg.hpp"

namespace crt {

bool SchemaMap::is_na(const std::string& field) const {
  return std::find(na_tokens.begin(), na_tokens.end(), field) != na_tokens.end();
}

std::vector<TextRecord> read_records(std::istream& in, char delimiter) {
  std::vector<TextRecord> out;
  std::string field;
  TextRecord rec;
  std::size_t line = 1;
  bool in_quotes = false, field_started = false, record_started = false;
  rec.line = 1;

  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    if (record_started) {
      end_field();
      out.push_back(std::move(rec));
    }
    rec = TextRecord{};
    record_started = false;
  };

  for (int ci; (ci = in.get()) != std::char_traits<char>::eof();) {
    const char c = static_cast<char>(ci);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (!record_started && c != '\n' && c != '\r') {
      record_started = true;
      rec.line = line;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\r') {
      // tolerate CRLF
    } else if (c == '\n') {
      end_record();
      ++line;
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", rec.line);
  end_record();
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s, std::size_t line, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError("column '" + column + "': cannot parse '" + s + "' as a number", line);
  }
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("header has no column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

struct RawRow {
  double y;
  std::vector<std::optional<double>> x;
};

struct RawCluster {
  std::string id;
  int treatment;
  std::optional<std::string> stratum;
  std::vector<RawRow> rows;
};

}  // namespace

IngestResult read_trial(std::istream& in, const SchemaMap& schema) {
  const std::vector<TextRecord> records = read_records(in, schema.delimiter);
  if (records.empty()) throw EmptyDataset("input has no header row");

  std::vector<std::string> header;
  for (const auto& f : records.front().fields) header.push_back(trim(f));
  const std::size_t ic = column_index(header, schema.cluster_col);
  const std::size_t ia = column_index(header, schema.treatment_col);
  const std::size_t iy = column_index(header, schema.outcome_col);
  std::vector<std::size_t> ix;
  for (const auto& name : schema.covariate_cols) ix.push_back(column_index(header, name));
  std::optional<std::size_t> is;
  if (schema.stratum_col) is = column_index(header, *schema.stratum_col);

  IngestResult result;
  IngestReport& report = result.report;
  std::vector<RawCluster> clusters;
  std::unordered_map<std::string, std::size_t> lookup;

  for (std::size_t r = 1; r < records.size(); ++r) {
    const TextRecord& rec = records[r];
    if (rec.fields.size() == 1 && trim(rec.fields[0]).empty()) continue;
    if (rec.fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(rec.fields.size()),
                       rec.line);
    }
    ++report.rows_read;
    auto field = [&](std::size_t i) { return trim(rec.fields[i]); };

    const std::string id = field(ic);
    if (schema.is_na(id)) throw ParseError("missing cluster identifier", rec.line);
    const std::string a_text = field(ia);
    if (schema.is_na(a_text)) throw ParseError("missing treatment", rec.line);
    const double a = parse_double(a_text, rec.line, schema.treatment_col);
    if (a != 0.0 && a != 1.0) throw ParseError("treatment must be 0 or 1", rec.line);
    std::optional<std::string> stratum;
    if (is && !schema.is_na(field(*is))) stratum = field(*is);

    auto [it, inserted] = lookup.emplace(id, clusters.size());
    if (inserted) clusters.push_back(RawCluster{id, static_cast<int>(a), stratum, {}});
    RawCluster& cl = clusters[it->second];
    if (cl.treatment != static_cast<int>(a)) {
      throw InconsistentTreatment("cluster '" + id + "' has rows in both arms (line " +
                                  std::to_string(rec.line) + ")");
    }
    if (stratum) {
      if (!cl.stratum) cl.stratum = stratum;
      else if (*cl.stratum != *stratum)
        throw ParseError("cluster '" + id + "' has more than one stratum", rec.line);
    }

    const std::string y_text = field(iy);
    if (schema.is_na(y_text)) {
      ++report.dropped_rows;
      continue;
    }
    RawRow row{parse_double(y_text, rec.line, schema.outcome_col), {}};
    row.x.reserve(ix.size());
    for (std::size_t j = 0; j < ix.size(); ++j) {
      const std::string v = field(ix[j]);
      if (schema.is_na(v)) row.x.emplace_back();
      else row.x.emplace_back(parse_double(v, rec.line, schema.covariate_cols[j]));
    }
    cl.rows.push_back(std::move(row));
  }

  // Imputation means pool every analysed individual across both arms.
  const std::size_t p = ix.size();
  std::vector<double> means(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    detail::CompensatedSum sum;
    std::size_t n = 0;
    for (const auto& cl : clusters) {
      for (const auto& row : cl.rows) {
        if (row.x[j]) {
          sum.add(*row.x[j]);
          ++n;
        }
      }
    }
    if (n > 0) means[j] = sum.value() / static_cast<double>(n);
    else if (report.rows_read > report.dropped_rows)
      throw EmptyDataset("covariate '" + schema.covariate_cols[j] + "' has no observed values");
  }

  TrialDataset& data = result.data;
  data.covariate_names = schema.covariate_cols;
  for (auto& cl : clusters) {
    if (cl.rows.empty()) {
      ++report.removed_clusters;
      continue;
    }
    ClusterRecord rec;
    rec.cluster_id = cl.id;
    rec.treatment = cl.treatment;
    rec.stratum = cl.stratum;
    rec.outcomes.reserve(cl.rows.size());
    rec.covariates.resize(static_cast<Eigen::Index>(cl.rows.size()), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < cl.rows.size(); ++i) {
      rec.outcomes.push_back(cl.rows[i].y);
      for (std::size_t j = 0; j < p; ++j) {
        const auto& v = cl.rows[i].x[j];
        if (!v) ++report.imputed_cells;
        rec.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            v ? *v : means[j];
      }
    }
    data.clusters.push_back(std::move(rec));
  }
  if (data.clusters.empty()) throw EmptyDataset("no individuals with an observed outcome");
  data.validate_structure();
  return result;
}

IngestResult read_trial(const std::string& path, const SchemaMap& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_trial(in, schema);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);  // no "-0"
  return buf;
}

std::string csv_quote(const std::string& field, char delimiter) {
  if (field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) == std::string::npos) {
    return field;
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_trial(const TrialDataset& data, std::ostream& out) {
  data.validate_structure();
  const bool strata = std::any_of(data.clusters.begin(), data.clusters.end(),
                                  [](const auto& c) { return c.stratum.has_value(); });
  out << "cluster,treatment,y";
  for (const auto& name : data.covariate_names) out << ',' << csv_quote(name);
  if (strata) out << ",stratum";
  out << '\n';
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const auto& c : data.clusters) {
    const std::string id = csv_quote(c.cluster_id);
    for (std::size_t i = 0; i < c.size(); ++i) {
      out << id << ',' << c.treatment << ',' << num(c.outcomes[i]);
      for (Eigen::Index j = 0; j < c.covariates.cols(); ++j) {
        out << ',' << num(c.covariates(static_cast<Eigen::Index>(i), j));
      }
      if (strata) out << ',' << (c.stratum ? csv_quote(*c.stratum) : std::string("NA"));
      out << '\n';
    }
  }
}

void write_trial(const TrialDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_trial(data, out);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::CSV;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw InvalidArgument("unknown output format '" + name + "'");
}

namespace {

using Cells = std::vector<std::vector<std::string>>;

void emit(const std::vector<std::string>& header, const Cells& rows, ReportFormat format,
          std::ostream& out) {
  if (format == ReportFormat::CSV) {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t j = 0; j < cells.size(); ++j) {
        if (j) out << ',';
        out << csv_quote(cells[j]);
      }
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return;
  }
  std::vector<std::size_t> width(header.size(), 3);
  for (std::size_t j = 0; j < header.size(); ++j) width[j] = std::max(width[j], header[j].size());
  for (const auto& r : rows)
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());

  auto pad = [](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w - s.size(), ' ');
    return left ? s + fill : fill + s;
  };
  auto line = [&](const std::vector<std::string>& cells) {
    out << '|';
    for (std::size_t j = 0; j < cells.size(); ++j) out << ' ' << pad(cells[j], width[j], j == 0) << " |";
    out << '\n';
  };
  line(header);
  out << '|';
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string dashes(width[j] - 1, '-');
    out << ' ' << (j == 0 ? ":" + dashes : dashes + ":") << " |";
  }
  out << '\n';
  for (const auto& r : rows) line(r);
}

std::vector<std::string> estimate_cells(const EstimateReport& r) {
  return {r.estimator_label,         std::string(to_string(r.variance_method)),
          format_number(r.delta_hat), format_number(r.se),
          format_number(r.ci_low),    format_number(r.ci_high),
          format_number(r.level)};
}

const std::vector<std::string> kEstimateHeader{"estimator", "variance", "estimate", "se",
                                               "ci_low",    "ci_high",  "level"};

template <class F>
void to_file(const std::string& path, F&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  body(out);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace

void write_report(const EstimateReport& report, ReportFormat format, std::ostream& out) {
  emit(kEstimateHeader, {estimate_cells(report)}, format, out);
}

void write_report(const AnalysisTable& table, ReportFormat format, std::ostream& out) {
  if (!table.pvr.empty() && table.pvr.size() != table.reports.size()) {
    throw InvalidArgument("pvr must be empty or parallel to reports");
  }
  std::vector<std::string> header = kEstimateHeader;
  if (!table.pvr.empty()) header.push_back("pvr");
  Cells rows;
  for (std::size_t i = 0; i < table.reports.size(); ++i) {
    rows.push_back(estimate_cells(table.reports[i]));
    if (!table.pvr.empty()) rows.back().push_back(format_number(table.pvr[i]));
  }
  emit(header, rows, format, out);
}

void write_report(const MetricsTable& table, ReportFormat format, std::ostream& out) {
  const std::vector<std::string> header{"estimator", "bias",        "emp_se",   "ase",
                                        "cp",        "re",          "mcse_bias", "mcse_emp_se",
                                        "mcse_ase",  "mcse_cp",     "mcse_re",  "n_converged",
                                        "n_reps"};
  Cells rows;
  for (const auto& r : table.rows) {
    rows.push_back({r.label, format_number(r.bias), format_number(r.emp_se),
                    format_number(r.ase), format_number(r.cp), format_number(r.re),
                    format_number(r.mcse_bias), format_number(r.mcse_emp_se),
                    format_number(r.mcse_ase), format_number(r.mcse_cp), format_number(r.mcse_re),
                    std::to_string(r.n_converged), std::to_string(r.n_reps)});
  }
  if (format == ReportFormat::Markdown && !table.title.empty()) {
    out << "### " << table.title << "\n\n"
        << "truth = " << format_number(table.truth)
        << ", nominal level = " << format_number(table.level) << "\n\n";
  }
  emit(header, rows, format, out);
}

void write_report(const AnalysisTable& table, ReportFormat format, const std::string& path) {
  to_file(path, [&](std::ostream& out) { write_report(table, format, out); });
}

void write_report(const MetricsTable& table, ReportFormat format, const std::string& path) {
  to_file(path, [&](std::ostream& out) { write_report(table, format, out); });
}

}  // namespace crt
