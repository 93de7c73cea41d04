#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "xspace/error.hpp"

namespace xspace {

/// One (space, method) aggregate. Sparsity is empty when suppressed.
struct ReportRow {
  std::string dataset;
  std::string space;
  std::string method;
  double faithfulness_pct = 0.0;
  std::optional<double> sparsity;
  double cls_robustness = 0.0;
  double xai_robustness = 0.0;
  std::optional<double> shannon_entropy;  // empty when every attribution was all-zero
  double beta = 2.0;
  double eps = 0.05;
  double lambda = 0.01;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
};

/// Sparsity is only reported for rows whose flip rate reaches 50%.
inline std::optional<double> suppress_sparsity(double faithfulness_pct, double sparsity) {
  if (faithfulness_pct < 50.0) return std::nullopt;
  return sparsity;
}

namespace detail {

inline std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kReportCsvHeader =
    "dataset,space,method,faithfulness_pct,sparsity,cls_robustness,xai_robustness,shannon_entropy,beta,eps,lambda";

inline void write_report_csv(const ExperimentReport& r, std::ostream& out) {
  out << kReportCsvHeader << '\n';
  for (const auto& row : r.rows) {
    out << row.dataset << ',' << row.space << ',' << row.method << ',' << detail::fmt(row.faithfulness_pct) << ','
        << (row.sparsity ? detail::fmt(*row.sparsity) : "") << ',' << detail::fmt(row.cls_robustness) << ','
        << detail::fmt(row.xai_robustness) << ','
        << (row.shannon_entropy ? detail::fmt(*row.shannon_entropy) : "") << ',' << detail::fmt(row.beta) << ','
        << detail::fmt(row.eps) << ',' << detail::fmt(row.lambda) << '\n';
  }
}

/// "88% (0.87)", or "45% (-)" when sparsity is suppressed.
inline std::string report_cell(const ReportRow& row) {
  std::string cell = std::to_string(std::lround(row.faithfulness_pct)) + "% (";
  cell += row.sparsity ? detail::fmt(*row.sparsity, "%.2f") : "-";
  return cell + ")";
}

/// One table row per (dataset, space), one column per method, in order of
/// first appearance. An empty report yields only the header.
inline void write_report_markdown(const ExperimentReport& r, std::ostream& out) {
  std::vector<std::string> methods;
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& row : r.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) methods.push_back(row.method);
    const std::pair<std::string, std::string> key{row.dataset, row.space};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  if (!r.rows.empty()) {
    out << "Faithfulness flip rate, sparsity in parentheses (beta = " << detail::fmt(r.rows.front().beta)
        << "); (-) marks sparsity suppressed below 50% faithfulness.\n\n";
  }
  out << "| Dataset | Space |";
  for (const auto& m : methods) out << ' ' << m << " |";
  out << "\n|---|---|";
  for (std::size_t i = 0; i < methods.size(); ++i) out << "---|";
  out << '\n';
  for (const auto& [dataset, space] : keys) {
    out << "| " << dataset << " | " << space << " |";
    for (const auto& m : methods) {
      std::string cell;
      for (const auto& row : r.rows)
        if (row.dataset == dataset && row.space == space && row.method == m) cell = report_cell(row);
      out << ' ' << cell << " |";
    }
    out << '\n';
  }
}

enum class ReportFormat { csv, markdown };

inline void emit_report(const ExperimentReport& r, ReportFormat format, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), Errc::io_error, "cannot write " + path);
  if (format == ReportFormat::csv) {
    write_report_csv(r, out);
  } else {
    write_report_markdown(r, out);
  }
  require(static_cast<bool>(out), Errc::io_error, "failed writing " + path);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_field(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(Errc::malformed_file, "report field " + what + " is not a number: '" + s + "'");
}

}  // namespace detail

/// Reads a report CSV written by write_report_csv.
inline ExperimentReport read_report_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::empty_file, "report is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kReportCsvHeader, Errc::malformed_file, "unexpected report header");
  ExperimentReport r;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    require(f.size() == 11, Errc::malformed_file, "report row needs 11 fields: " + line);
    ReportRow row;
    row.dataset = f[0];
    row.space = f[1];
    row.method = f[2];
    row.faithfulness_pct = detail::parse_field(f[3], "faithfulness_pct");
    if (!f[4].empty()) row.sparsity = detail::parse_field(f[4], "sparsity");
    row.cls_robustness = detail::parse_field(f[5], "cls_robustness");
    row.xai_robustness = detail::parse_field(f[6], "xai_robustness");
    if (!f[7].empty()) row.shannon_entropy = detail::parse_field(f[7], "shannon_entropy");
    row.beta = detail::parse_field(f[8], "beta");
    row.eps = detail::parse_field(f[9], "eps");
    row.lambda = detail::parse_field(f[10], "lambda");
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace xspace
