#pragma once

#include "aosbqp/driver.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace aosbqp {

enum class OutputFormat { KeyValue, Json };
/// "kv" or "json".
OutputFormat parse_output_format(std::string_view text);

/// Deterministic part of a SolveResult: everything except wall times and the
/// per-iteration trace (written separately).
struct ResultDocument {
  std::string variant;
  std::string status;
  double objective = 0.0;
  double supplied_active = 0.0;
  double supplied_reactive = 0.0;
  double final_phi = 0.0;
  double max_constraint = 0.0;
  int outer_iterations = 0;
  int penalty_iterations = 0;
  int trace_rows = 0;
  std::vector<int> demand_buses;
  std::vector<double> y;
  std::vector<int> generator_buses;
  std::vector<double> pg;
  std::vector<double> qg;
  std::vector<double> v;
  std::vector<double> theta;

  bool operator==(const ResultDocument&) const = default;
};

ResultDocument make_document(const SolveResult& result);

/// Numbers are written with 17 significant digits so parsing restores them exactly.
std::string emit_result(const ResultDocument& doc, OutputFormat format);
ResultDocument parse_result(std::string_view text, OutputFormat format);

/// One row per AO2 QP solve: outer,iteration,rho,alpha,phi,psi,status,y_<bus>...
std::string emit_trace_csv(const SolveResult& result);
std::string emit_timing(const SolveResult& result);

/// Writes result.txt (or result.json), trace.csv and timing.txt into `dir`,
/// creating it if needed. Throws std::runtime_error when a file cannot be written.
void write_outputs(const std::string& dir, const SolveResult& result, OutputFormat format);

}  // namespace aosbqp
