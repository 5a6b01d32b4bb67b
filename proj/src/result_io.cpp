#include "aosbqp/result_io.hpp"

#include "aosbqp/kv_config.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aosbqp {

OutputFormat parse_output_format(std::string_view text) {
  if (text == "kv") return OutputFormat::KeyValue;
  if (text == "json") return OutputFormat::Json;
  throw std::invalid_argument("unknown output format '" + std::string(text) + "' (expected kv or json)");
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += num(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> split(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, double>) {
      out.push_back(std::strtod(item.c_str(), nullptr));
    } else {
      out.push_back(static_cast<T>(std::stoll(item)));
    }
  }
  return out;
}

}  // namespace

ResultDocument make_document(const SolveResult& r) {
  ResultDocument d;
  d.variant = r.variant;
  d.status = r.status;
  d.objective = r.objective;
  d.supplied_active = r.supplied_active;
  d.supplied_reactive = r.supplied_reactive;
  d.final_phi = r.final_phi;
  d.max_constraint = r.max_constraint;
  d.outer_iterations = r.outer_iterations;
  d.penalty_iterations = r.penalty_iterations;
  for (const auto& t : r.ao2_traces) d.trace_rows += static_cast<int>(t.rows.size());
  d.demand_buses = r.demand_buses;
  d.y = to_std(r.switches);
  d.generator_buses = r.generator_buses;
  d.pg = to_std(r.input.pg);
  d.qg = to_std(r.input.qg);
  d.v = to_std(r.state.v);
  d.theta = to_std(r.state.theta);
  return d;
}

std::string emit_result(const ResultDocument& d, OutputFormat format) {
  if (format == OutputFormat::Json) {
    nlohmann::ordered_json j;
    j["variant"] = d.variant;
    j["status"] = d.status;
    j["objective"] = d.objective;
    j["supplied_active"] = d.supplied_active;
    j["supplied_reactive"] = d.supplied_reactive;
    j["final_phi"] = d.final_phi;
    j["max_constraint"] = d.max_constraint;
    j["outer_iterations"] = d.outer_iterations;
    j["penalty_iterations"] = d.penalty_iterations;
    j["trace_rows"] = d.trace_rows;
    j["demand_buses"] = d.demand_buses;
    j["y"] = d.y;
    j["generator_buses"] = d.generator_buses;
    j["pg"] = d.pg;
    j["qg"] = d.qg;
    j["v"] = d.v;
    j["theta"] = d.theta;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "variant = " << d.variant << "\n"
      << "status = " << d.status << "\n"
      << "objective = " << num(d.objective) << "\n"
      << "supplied_active = " << num(d.supplied_active) << "\n"
      << "supplied_reactive = " << num(d.supplied_reactive) << "\n"
      << "final_phi = " << num(d.final_phi) << "\n"
      << "max_constraint = " << num(d.max_constraint) << "\n"
      << "outer_iterations = " << d.outer_iterations << "\n"
      << "penalty_iterations = " << d.penalty_iterations << "\n"
      << "trace_rows = " << d.trace_rows << "\n"
      << "demand_buses = " << join(d.demand_buses) << "\n"
      << "y = " << join(d.y) << "\n"
      << "generator_buses = " << join(d.generator_buses) << "\n"
      << "pg = " << join(d.pg) << "\n"
      << "qg = " << join(d.qg) << "\n"
      << "v = " << join(d.v) << "\n"
      << "theta = " << join(d.theta) << "\n";
  return out.str();
}

ResultDocument parse_result(std::string_view text, OutputFormat format) {
  ResultDocument d;
  if (format == OutputFormat::Json) {
    const auto j = nlohmann::json::parse(text);
    d.variant = j.at("variant").get<std::string>();
    d.status = j.at("status").get<std::string>();
    d.objective = j.at("objective").get<double>();
    d.supplied_active = j.at("supplied_active").get<double>();
    d.supplied_reactive = j.at("supplied_reactive").get<double>();
    d.final_phi = j.at("final_phi").get<double>();
    d.max_constraint = j.at("max_constraint").get<double>();
    d.outer_iterations = j.at("outer_iterations").get<int>();
    d.penalty_iterations = j.at("penalty_iterations").get<int>();
    d.trace_rows = j.at("trace_rows").get<int>();
    d.demand_buses = j.at("demand_buses").get<std::vector<int>>();
    d.y = j.at("y").get<std::vector<double>>();
    d.generator_buses = j.at("generator_buses").get<std::vector<int>>();
    d.pg = j.at("pg").get<std::vector<double>>();
    d.qg = j.at("qg").get<std::vector<double>>();
    d.v = j.at("v").get<std::vector<double>>();
    d.theta = j.at("theta").get<std::vector<double>>();
    return d;
  }
  const KeyValueConfig kv = KeyValueConfig::parse(text);
  auto need = [&](const char* key) {
    auto v = kv.get(key);
    if (!v) throw ConfigError(std::string("result document lacks key '") + key + "'");
    return *v;
  };
  d.variant = need("variant");
  d.status = need("status");
  d.objective = std::strtod(need("objective").c_str(), nullptr);
  d.supplied_active = std::strtod(need("supplied_active").c_str(), nullptr);
  d.supplied_reactive = std::strtod(need("supplied_reactive").c_str(), nullptr);
  d.final_phi = std::strtod(need("final_phi").c_str(), nullptr);
  d.max_constraint = std::strtod(need("max_constraint").c_str(), nullptr);
  d.outer_iterations = std::stoi(need("outer_iterations"));
  d.penalty_iterations = std::stoi(need("penalty_iterations"));
  d.trace_rows = std::stoi(need("trace_rows"));
  d.demand_buses = split<int>(need("demand_buses"));
  d.y = split<double>(need("y"));
  d.generator_buses = split<int>(need("generator_buses"));
  d.pg = split<double>(need("pg"));
  d.qg = split<double>(need("qg"));
  d.v = split<double>(need("v"));
  d.theta = split<double>(need("theta"));
  return d;
}

std::string emit_trace_csv(const SolveResult& r) {
  std::ostringstream out;
  out << "outer,iteration,rho,alpha,phi,psi,status";
  for (int bus : r.demand_buses) out << ",y_" << bus;
  out << "\n";
  for (std::size_t o = 0; o < r.ao2_traces.size(); ++o) {
    for (const auto& row : r.ao2_traces[o].rows) {
      out << o + 1 << ',' << row.iteration << ',' << num(row.rho) << ',' << num(row.alpha) << ',' << num(row.phi)
          << ',' << num(row.psi) << ',' << to_string(row.status);
      for (Eigen::Index k = 0; k < row.y.size(); ++k) out << ',' << num(row.y[k]);
      out << "\n";
    }
  }
  return out.str();
}

std::string emit_timing(const SolveResult& r) {
  std::ostringstream out;
  out << "ao1_seconds = " << num(r.timings.ao1_seconds) << "\n"
      << "ao2_seconds = " << num(r.timings.ao2_seconds) << "\n"
      << "total_seconds = " << num(r.timings.total_seconds) << "\n";
  return out.str();
}

void write_outputs(const std::string& dir, const SolveResult& result, OutputFormat format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  auto put = [&](const std::string& name, const std::string& body) {
    const fs::path path = fs::path(dir) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << body;
    if (!f) throw std::runtime_error("failed writing " + path.string());
  };
  put(format == OutputFormat::Json ? "result.json" : "result.txt", emit_result(make_document(result), format));
  put("trace.csv", emit_trace_csv(result));
  put("timing.txt", emit_timing(result));
}

}  // namespace aosbqp
