// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mtgc/errors.hpp"

namespace mtgc {

/// One row of the metric trace, recorded at the (t, e) boundary after group
/// aggregation e-1 -> e (e = E rows also include the global aggregation).
struct MetricRow {
  std::uint64_t t = 0;
  std::uint64_t e = 0;
  double grad_norm_sq = 0.0;
  double loss = 0.0;
  std::optional<double> subopt;
  std::optional<double> client_drift;  // Q_t
  std::optional<double> group_drift;   // D_t
  std::optional<double> delta1_sq;
  std::optional<double> delta2_sq_max;
  double z_sum_violation = 0.0;
  double y_sum_violation = 0.0;

  bool operator==(const MetricRow&) const = default;
};

struct MetricTrace {
  std::vector<MetricRow> rows;

  bool operator==(const MetricTrace&) const = default;
};

inline constexpr const char* kMetricCsvHeader =
    "t,e,grad_norm_sq,loss,subopt,Q_t,D_t,delta1_sq,delta2_sq_max,z_sum_violation,y_sum_violation";

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_opt(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

inline std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace detail

inline void write_metric_csv(std::ostream& out, const MetricTrace& trace) {
  out << kMetricCsvHeader << '\n';
  for (const auto& r : trace.rows) {
    out << r.t << ',' << r.e << ',' << detail::format_real(r.grad_norm_sq) << ',' << detail::format_real(r.loss)
        << ',' << detail::format_opt(r.subopt) << ',' << detail::format_opt(r.client_drift) << ','
        << detail::format_opt(r.group_drift) << ',' << detail::format_opt(r.delta1_sq) << ','
        << detail::format_opt(r.delta2_sq_max) << ',' << detail::format_real(r.z_sum_violation) << ','
        << detail::format_real(r.y_sum_violation) << '\n';
  }
}

inline std::string metric_csv_string(const MetricTrace& trace) {
  std::ostringstream os;
  write_metric_csv(os, trace);
  return os.str();
}

inline MetricTrace read_metric_csv(std::istream& in, const std::string& name = "<trace>") {
  std::string line;
  if (!std::getline(in, line)) throw IoError(name + ": empty metric file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricCsvHeader) throw ComparisonError(name + ": unexpected metric header");
  MetricTrace trace;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 11) throw ComparisonError(name + ":" + std::to_string(lineno) + ": expected 11 fields");
    try {
      MetricRow r;
      r.t = std::stoull(f[0]);
      r.e = std::stoull(f[1]);
      r.grad_norm_sq = std::stod(f[2]);
      r.loss = std::stod(f[3]);
      r.subopt = detail::parse_opt(f[4]);
      r.client_drift = detail::parse_opt(f[5]);
      r.group_drift = detail::parse_opt(f[6]);
      r.delta1_sq = detail::parse_opt(f[7]);
      r.delta2_sq_max = detail::parse_opt(f[8]);
      r.z_sum_violation = std::stod(f[9]);
      r.y_sum_violation = std::stod(f[10]);
      trace.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ComparisonError(name + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return trace;
}

inline MetricTrace load_metric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_metric_csv(in, path);
}

}  // namespace mtgc
