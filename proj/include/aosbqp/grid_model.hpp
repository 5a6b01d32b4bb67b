#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aosbqp {

/// A network node. Voltage quantities are per unit, angles in radians.
struct Bus {
  int id = 0;
  double v_min = 0.95;
  double v_max = 1.05;
  double theta_min = -1.5707963267948966;
  double theta_max = 1.5707963267948966;
  /// Voltage magnitude held at the slack bus (also the flat-start value).
  double v_set = 1.0;
  bool is_slack = false;

  bool operator==(const Bus&) const = default;
};

/// Series-only line model: g + i b = 1 / (r + i x). The source impedance is
/// kept so that serialization reproduces the file values exactly; it is zero
/// for branches built directly from g and b.
struct Branch {
  int from = 0;
  int to = 0;
  double g = 0.0;
  double b = 0.0;
  double r = 0.0;
  double x = 0.0;

  bool operator==(const Branch&) const = default;
};

/// Aggregated generation at one bus. Several source generators on the same
/// bus are merged by summing their limits.
struct Generator {
  int bus = 0;
  double pg_min = 0.0;
  double pg_max = 0.0;
  double qg_min = 0.0;
  double qg_max = 0.0;

  bool operator==(const Generator&) const = default;
};

/// One switchable demand. `rank` weights the delivered active power.
struct DemandSpec {
  int bus = 0;
  double pd = 0.0;
  double qd = 0.0;
  double rank = 1.0;

  bool operator==(const DemandSpec&) const = default;
};

/// Grid data in per unit. Collections are ordered by bus index; there is at
/// most one generator and one demand per bus.
struct GridCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<DemandSpec> demands;

  bool operator==(const GridCase&) const = default;

  std::size_t num_buses() const { return buses.size(); }
  std::size_t num_generators() const { return generators.size(); }
  std::size_t num_demands() const { return demands.size(); }

  /// Position of bus `id` in `buses`; throws std::out_of_range when absent.
  std::size_t bus_index(int id) const;
  std::size_t slack_index() const;

  /// Per-bus lookups into `generators` / `demands`, -1 where absent.
  std::vector<int> generator_at_bus() const;
  std::vector<int> demand_at_bus() const;

  /// Throws CaseError when any structural invariant is violated.
  void validate() const;
};

/// Dense G and B parts of the Laplacian bus admittance matrix.
struct AdmittanceMatrix {
  Eigen::MatrixXd G;
  Eigen::MatrixXd B;
};

enum class ShiftMode { AdditiveTotal, Multiplicative };
enum class DemandSetMode { LoadedBuses, AllBuses };

/// Demand-to-power mismatch transformation. Defaults reproduce the modified
/// 30-bus study: +2.5 p.u. active and +0.7 p.u. reactive system demand,
/// reactive limits halved, active upper limits at 70 %, ranks in {1..5}.
struct ScenarioConfig {
  double pd_shift = 2.5;
  double qd_shift = 0.7;
  ShiftMode shift_mode = ShiftMode::AdditiveTotal;
  double qg_bound_scale = 0.5;
  double pg_upper_scale = 0.7;
  int rank_levels = 5;
  std::uint64_t rank_seed = 1;
  DemandSetMode demand_set_mode = DemandSetMode::AllBuses;

  /// Leaves every case unchanged apart from the rank draw.
  static ScenarioConfig identity();
  void validate() const;
};

/// Malformed case text. `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { MalformedRow, UnknownBus, DuplicateBranch, ZeroImpedance, MissingTable, Invalid };

  ParseError(Kind kind, int line, const std::string& what);
  Kind kind() const { return kind_; }
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

class CaseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the MATPOWER case layout (see README for the column subset).
GridCase parse_case(std::string_view text);
GridCase load_case(const std::string& path);

/// Writes a case that parse_case reads back to an equal GridCase.
std::string serialize_case(const GridCase& grid);

AdmittanceMatrix build_admittance(const GridCase& grid);

GridCase apply_scenario(const GridCase& grid, const ScenarioConfig& cfg);

const char* to_string(ShiftMode mode);
const char* to_string(DemandSetMode mode);
ShiftMode parse_shift_mode(std::string_view text);
DemandSetMode parse_demand_set_mode(std::string_view text);

}  // namespace aosbqp
