#include "aosbqp/grid_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace aosbqp {

namespace {

// Column positions (0-based) of the MATPOWER tables that are read.
namespace bus_col {
constexpr int kId = 0, kType = 1, kPd = 2, kQd = 3, kVm = 7, kVmax = 11, kVmin = 12;
constexpr int kCount = 13;
}  // namespace bus_col
namespace gen_col {
constexpr int kBus = 0, kQmax = 3, kQmin = 4, kStatus = 7, kPmax = 8, kPmin = 9;
constexpr int kCount = 10;
}  // namespace gen_col
namespace branch_col {
constexpr int kFrom = 0, kTo = 1, kR = 2, kX = 3, kStatus = 10;
constexpr int kCount = 4;
}  // namespace branch_col

struct Row {
  int line = 0;
  std::vector<double> values;
};

struct RawTables {
  std::map<std::string, std::vector<Row>> tables;
  std::map<std::string, std::pair<int, double>> scalars;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_number(std::string_view token, int line) {
  std::string buf(token);
  char* end = nullptr;
  const double value = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0' || !std::isfinite(value)) {
    throw ParseError(ParseError::Kind::MalformedRow, line, "malformed number '" + buf + "'");
  }
  return value;
}

void split_row(std::string_view body, int line, std::vector<Row>& out) {
  // A physical line may hold several ';'-terminated rows.
  std::size_t start = 0;
  while (start <= body.size()) {
    const std::size_t semi = body.find(';', start);
    const std::string_view piece =
        trim(body.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start));
    if (!piece.empty()) {
      Row row{line, {}};
      std::size_t pos = 0;
      while (pos < piece.size()) {
        while (pos < piece.size() && (std::isspace(static_cast<unsigned char>(piece[pos])) || piece[pos] == ','))
          ++pos;
        std::size_t end = pos;
        while (end < piece.size() && !std::isspace(static_cast<unsigned char>(piece[end])) && piece[end] != ',')
          ++end;
        if (end > pos) row.values.push_back(parse_number(piece.substr(pos, end - pos), line));
        pos = end;
      }
      out.push_back(std::move(row));
    }
    if (semi == std::string_view::npos) break;
    start = semi + 1;
  }
}

RawTables tokenize(std::string_view text) {
  RawTables raw;
  std::string current;  // open table name, empty when outside a table
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);
    line = trim(line);
    if (line.empty()) continue;

    if (!current.empty()) {
      const auto close = line.find(']');
      split_row(line.substr(0, close), line_no, raw.tables[current]);
      if (close != std::string_view::npos) current.clear();
      continue;
    }
    if (line.rfind("function", 0) == 0) continue;
    if (line.rfind("mpc.", 0) != 0) {
      throw ParseError(ParseError::Kind::MalformedRow, line_no, "unexpected content '" + std::string(line) + "'");
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(ParseError::Kind::MalformedRow, line_no, "expected assignment");
    }
    const std::string name(trim(line.substr(4, eq - 4)));
    std::string_view rhs = trim(line.substr(eq + 1));
    if (!rhs.empty() && rhs.front() == '[') {
      rhs.remove_prefix(1);
      const auto close = rhs.find(']');
      raw.tables[name];
      split_row(rhs.substr(0, close), line_no, raw.tables[name]);
      if (close == std::string_view::npos) current = name;
      continue;
    }
    if (!rhs.empty() && rhs.back() == ';') rhs.remove_suffix(1);
    rhs = trim(rhs);
    if (!rhs.empty() && rhs.front() == '\'') continue;  // string-valued field such as version
    raw.scalars[name] = {line_no, parse_number(rhs, line_no)};
  }
  if (!current.empty()) {
    throw ParseError(ParseError::Kind::MalformedRow, line_no, "unterminated table mpc." + current);
  }
  return raw;
}

const std::vector<Row>& require_table(const RawTables& raw, const std::string& name) {
  const auto it = raw.tables.find(name);
  if (it == raw.tables.end()) {
    throw ParseError(ParseError::Kind::MissingTable, 0, "missing table mpc." + name);
  }
  return it->second;
}

void require_columns(const Row& row, int count, const char* table) {
  if (static_cast<int>(row.values.size()) < count) {
    throw ParseError(ParseError::Kind::MalformedRow, row.line,
                     std::string("row of mpc.") + table + " has " + std::to_string(row.values.size()) +
                         " columns, need at least " + std::to_string(count));
  }
}

int as_bus_id(double value, int line) {
  if (value != std::floor(value) || value < 1) {
    throw ParseError(ParseError::Kind::MalformedRow, line, "bus id must be a positive integer");
  }
  return static_cast<int>(value);
}

// Returns w with fl(w / base) == target when one exists near target * base, so
// that per-unit values survive a serialize/parse cycle bit for bit.
double scaled_for_roundtrip(double target, double base) {
  double w = target * base;
  if (w / base == target) return w;
  double lo = w, hi = w;
  for (int i = 0; i < 64; ++i) {
    lo = std::nextafter(lo, -INFINITY);
    hi = std::nextafter(hi, INFINITY);
    if (lo / base == target) return lo;
    if (hi / base == target) return hi;
  }
  return w;
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

ParseError::ParseError(Kind kind, int line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), kind_(kind), line_(line) {}

std::size_t GridCase::bus_index(int id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return i;
  throw std::out_of_range("unknown bus id " + std::to_string(id));
}

std::size_t GridCase::slack_index() const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].is_slack) return i;
  throw CaseError("case has no slack bus");
}

std::vector<int> GridCase::generator_at_bus() const {
  std::vector<int> at(buses.size(), -1);
  for (std::size_t g = 0; g < generators.size(); ++g) at[bus_index(generators[g].bus)] = static_cast<int>(g);
  return at;
}

std::vector<int> GridCase::demand_at_bus() const {
  std::vector<int> at(buses.size(), -1);
  for (std::size_t d = 0; d < demands.size(); ++d) at[bus_index(demands[d].bus)] = static_cast<int>(d);
  return at;
}

void GridCase::validate() const {
  if (!(base_mva > 0)) throw CaseError("base_mva must be positive");
  if (buses.empty()) throw CaseError("case has no buses");
  std::set<int> ids;
  int slack = 0;
  for (const auto& bus : buses) {
    if (!ids.insert(bus.id).second) throw CaseError("duplicate bus id " + std::to_string(bus.id));
    if (!(bus.v_min > 0)) throw CaseError("bus " + std::to_string(bus.id) + ": v_min must be positive");
    if (bus.v_min > bus.v_max) throw CaseError("bus " + std::to_string(bus.id) + ": v_min > v_max");
    if (bus.theta_min > bus.theta_max) throw CaseError("bus " + std::to_string(bus.id) + ": theta_min > theta_max");
    slack += bus.is_slack ? 1 : 0;
  }
  if (slack != 1) throw CaseError("case needs exactly one slack bus, found " + std::to_string(slack));
  std::set<std::pair<int, int>> lines;
  for (const auto& br : branches) {
    if (!ids.count(br.from) || !ids.count(br.to)) throw CaseError("branch references unknown bus");
    if (br.from == br.to) throw CaseError("branch connects bus " + std::to_string(br.from) + " to itself");
    if (!lines.insert(std::minmax(br.from, br.to)).second) throw CaseError("duplicate branch");
  }
  std::set<int> gen_buses;
  for (const auto& gen : generators) {
    if (!ids.count(gen.bus)) throw CaseError("generator references unknown bus");
    if (!gen_buses.insert(gen.bus).second) throw CaseError("two generators on one bus");
    if (gen.pg_min > gen.pg_max || gen.qg_min > gen.qg_max) {
      throw CaseError("generator at bus " + std::to_string(gen.bus) + " has an empty bound interval");
    }
  }
  std::set<int> demand_buses;
  for (const auto& d : demands) {
    if (!ids.count(d.bus)) throw CaseError("demand references unknown bus");
    if (!demand_buses.insert(d.bus).second) throw CaseError("two demands on one bus");
    if (!(d.rank > 0)) throw CaseError("demand rank must be positive");
    if (!(d.pd >= 0) || !std::isfinite(d.qd)) throw CaseError("demand values out of range");
  }
  if (demands.empty()) throw CaseError("case has no demands");
}

GridCase parse_case(std::string_view text) {
  const RawTables raw = tokenize(text);
  GridCase grid;
  if (const auto it = raw.scalars.find("baseMVA"); it != raw.scalars.end()) {
    grid.base_mva = it->second.second;
    if (!(grid.base_mva > 0)) throw ParseError(ParseError::Kind::Invalid, it->second.first, "baseMVA must be > 0");
  }
  const double base = grid.base_mva;

  std::unordered_map<int, std::size_t> index;
  std::vector<std::pair<double, double>> bus_load;
  for (const Row& row : require_table(raw, "bus")) {
    require_columns(row, bus_col::kCount, "bus");
    Bus bus;
    bus.id = as_bus_id(row.values[bus_col::kId], row.line);
    bus.is_slack = row.values[bus_col::kType] == 3;
    bus.v_set = row.values[bus_col::kVm];
    bus.v_max = row.values[bus_col::kVmax];
    bus.v_min = row.values[bus_col::kVmin];
    if (!(bus.v_min > 0) || bus.v_min > bus.v_max) {
      throw ParseError(ParseError::Kind::Invalid, row.line, "invalid voltage limits");
    }
    if (!index.emplace(bus.id, grid.buses.size()).second) {
      throw ParseError(ParseError::Kind::Invalid, row.line, "duplicate bus id " + std::to_string(bus.id));
    }
    grid.buses.push_back(bus);
    bus_load.emplace_back(row.values[bus_col::kPd] / base, row.values[bus_col::kQd] / base);
  }
  auto resolve = [&](double value, int line) {
    const int id = as_bus_id(value, line);
    const auto it = index.find(id);
    if (it == index.end()) {
      throw ParseError(ParseError::Kind::UnknownBus, line, "unknown bus reference " + std::to_string(id));
    }
    return it->second;
  };

  if (const auto it = raw.tables.find("angle_limits"); it != raw.tables.end()) {
    for (const Row& row : it->second) {
      require_columns(row, 3, "angle_limits");
      Bus& bus = grid.buses[resolve(row.values[0], row.line)];
      bus.theta_min = row.values[1];
      bus.theta_max = row.values[2];
    }
  }

  std::vector<std::optional<Generator>> gen_at(grid.buses.size());
  for (const Row& row : require_table(raw, "gen")) {
    require_columns(row, gen_col::kCount, "gen");
    const std::size_t k = resolve(row.values[gen_col::kBus], row.line);
    if (row.values[gen_col::kStatus] <= 0) continue;
    auto& gen = gen_at[k];
    if (!gen) gen = Generator{grid.buses[k].id, 0.0, 0.0, 0.0, 0.0};
    gen->pg_min += row.values[gen_col::kPmin] / base;
    gen->pg_max += row.values[gen_col::kPmax] / base;
    gen->qg_min += row.values[gen_col::kQmin] / base;
    gen->qg_max += row.values[gen_col::kQmax] / base;
  }
  for (auto& gen : gen_at)
    if (gen) grid.generators.push_back(*gen);

  std::set<std::pair<int, int>> seen;
  for (const Row& row : require_table(raw, "branch")) {
    require_columns(row, branch_col::kCount, "branch");
    const std::size_t f = resolve(row.values[branch_col::kFrom], row.line);
    const std::size_t t = resolve(row.values[branch_col::kTo], row.line);
    if (row.values.size() > branch_col::kStatus && row.values[branch_col::kStatus] <= 0) continue;
    if (f == t) throw ParseError(ParseError::Kind::Invalid, row.line, "branch connects a bus to itself");
    const double r = row.values[branch_col::kR];
    const double x = row.values[branch_col::kX];
    const double z2 = r * r + x * x;
    if (z2 == 0.0) throw ParseError(ParseError::Kind::ZeroImpedance, row.line, "zero impedance branch");
    Branch br{grid.buses[f].id, grid.buses[t].id, r / z2, -x / z2, r, x};
    if (!seen.insert(std::minmax(br.from, br.to)).second) {
      throw ParseError(ParseError::Kind::DuplicateBranch, row.line,
                       "duplicate branch " + std::to_string(br.from) + "-" + std::to_string(br.to));
    }
    grid.branches.push_back(br);
  }

  // Demands: explicit extension table when present, otherwise every loaded bus.
  std::vector<std::optional<DemandSpec>> demand_at(grid.buses.size());
  if (const auto it = raw.tables.find("demand"); it != raw.tables.end()) {
    for (const Row& row : it->second) {
      require_columns(row, 4, "demand");
      const std::size_t k = resolve(row.values[0], row.line);
      if (demand_at[k]) throw ParseError(ParseError::Kind::Invalid, row.line, "two demands on one bus");
      if (!(row.values[3] > 0)) throw ParseError(ParseError::Kind::Invalid, row.line, "demand rank must be > 0");
      demand_at[k] = DemandSpec{grid.buses[k].id, row.values[1] / base, row.values[2] / base, row.values[3]};
    }
  } else {
    for (std::size_t k = 0; k < grid.buses.size(); ++k) {
      const auto [pd, qd] = bus_load[k];
      if (pd != 0.0 || qd != 0.0) demand_at[k] = DemandSpec{grid.buses[k].id, pd, qd, 1.0};
    }
  }
  for (auto& d : demand_at)
    if (d) grid.demands.push_back(*d);

  try {
    grid.validate();
  } catch (const CaseError& e) {
    throw ParseError(ParseError::Kind::Invalid, 0, e.what());
  }
  return grid;
}

GridCase load_case(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open case file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str());
}

std::string serialize_case(const GridCase& grid) {
  const double base = grid.base_mva;
  auto mw = [&](double pu) { return fmt(scaled_for_roundtrip(pu, base)); };
  const auto demand_at = grid.demand_at_bus();
  const auto gen_at = grid.generator_at_bus();

  std::ostringstream os;
  os << "function mpc = aosbqp_case\n";
  os << "mpc.version = '2';\n";
  os << "mpc.baseMVA = " << fmt(base) << ";\n\n";
  os << "%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n";
  for (std::size_t k = 0; k < grid.buses.size(); ++k) {
    const Bus& bus = grid.buses[k];
    const int type = bus.is_slack ? 3 : (gen_at[k] >= 0 ? 2 : 1);
    double pd = 0.0, qd = 0.0;
    if (demand_at[k] >= 0) {
      pd = grid.demands[demand_at[k]].pd;
      qd = grid.demands[demand_at[k]].qd;
    }
    os << '\t' << bus.id << '\t' << type << '\t' << mw(pd) << '\t' << mw(qd) << "\t0\t0\t1\t" << fmt(bus.v_set)
       << "\t0\t0\t1\t" << fmt(bus.v_max) << '\t' << fmt(bus.v_min) << ";\n";
  }
  os << "];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n";
  for (const auto& gen : grid.generators) {
    os << '\t' << gen.bus << "\t0\t0\t" << mw(gen.qg_max) << '\t' << mw(gen.qg_min) << "\t1\t" << fmt(base) << "\t1\t"
       << mw(gen.pg_max) << '\t' << mw(gen.pg_min) << ";\n";
  }
  os << "];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\nmpc.branch = [\n";
  for (const auto& br : grid.branches) {
    double r = br.r, x = br.x;
    if (r == 0.0 && x == 0.0) {
      const double y2 = br.g * br.g + br.b * br.b;
      r = br.g / y2;
      x = -br.b / y2;
    }
    os << '\t' << br.from << '\t' << br.to << '\t' << fmt(r) << '\t' << fmt(x) << ";\n";
  }
  os << "];\n\n%% switchable demands: bus Pd Qd rank\nmpc.demand = [\n";
  for (const auto& d : grid.demands) {
    os << '\t' << d.bus << '\t' << mw(d.pd) << '\t' << mw(d.qd) << '\t' << fmt(d.rank) << ";\n";
  }
  os << "];\n\n%% angle limits (radians): bus min max\nmpc.angle_limits = [\n";
  for (const auto& bus : grid.buses) {
    os << '\t' << bus.id << '\t' << fmt(bus.theta_min) << '\t' << fmt(bus.theta_max) << ";\n";
  }
  os << "];\n";
  return os.str();
}

AdmittanceMatrix build_admittance(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.num_buses());
  AdmittanceMatrix y{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
  for (const auto& br : grid.branches) {
    const auto k = static_cast<Eigen::Index>(grid.bus_index(br.from));
    const auto l = static_cast<Eigen::Index>(grid.bus_index(br.to));
    y.G(k, l) -= br.g;
    y.G(l, k) -= br.g;
    y.B(k, l) -= br.b;
    y.B(l, k) -= br.b;
    y.G(k, k) += br.g;
    y.G(l, l) += br.g;
    y.B(k, k) += br.b;
    y.B(l, l) += br.b;
  }
  return y;
}

ScenarioConfig ScenarioConfig::identity() {
  ScenarioConfig cfg;
  cfg.pd_shift = 0.0;
  cfg.qd_shift = 0.0;
  cfg.qg_bound_scale = 1.0;
  cfg.pg_upper_scale = 1.0;
  cfg.rank_levels = 1;
  cfg.demand_set_mode = DemandSetMode::LoadedBuses;
  return cfg;
}

void ScenarioConfig::validate() const {
  if (!(qg_bound_scale > 0 && qg_bound_scale <= 1)) throw ScenarioError("qg_bound_scale must lie in (0, 1]");
  if (!(pg_upper_scale > 0 && pg_upper_scale <= 1)) throw ScenarioError("pg_upper_scale must lie in (0, 1]");
  if (rank_levels < 1) throw ScenarioError("rank_levels must be >= 1");
  if (!std::isfinite(pd_shift) || !std::isfinite(qd_shift)) throw ScenarioError("demand shifts must be finite");
}

GridCase apply_scenario(const GridCase& grid, const ScenarioConfig& cfg) {
  cfg.validate();
  GridCase out = grid;

  double total_pd = 0.0, total_qd = 0.0;
  for (const auto& d : out.demands) {
    total_pd += d.pd;
    total_qd += d.qd;
  }
  for (auto& d : out.demands) {
    if (cfg.shift_mode == ShiftMode::AdditiveTotal) {
      if (total_pd != 0.0) d.pd += cfg.pd_shift * d.pd / total_pd;
      if (total_qd != 0.0) d.qd += cfg.qd_shift * d.qd / total_qd;
    } else {
      d.pd *= 1.0 + cfg.pd_shift;
      d.qd *= 1.0 + cfg.qd_shift;
    }
  }

  for (auto& gen : out.generators) {
    gen.qg_min *= cfg.qg_bound_scale;
    gen.qg_max *= cfg.qg_bound_scale;
    gen.pg_max *= cfg.pg_upper_scale;
    if (gen.pg_min > gen.pg_max) {
      throw ScenarioError("generator at bus " + std::to_string(gen.bus) + ": pg_min exceeds scaled pg_max");
    }
  }

  if (cfg.demand_set_mode == DemandSetMode::AllBuses) {
    const auto at = out.demand_at_bus();
    std::vector<DemandSpec> all;
    for (std::size_t k = 0; k < out.buses.size(); ++k) {
      all.push_back(at[k] >= 0 ? out.demands[at[k]] : DemandSpec{out.buses[k].id, 0.0, 0.0, 1.0});
    }
    out.demands = std::move(all);
  }

  // mt19937_64 output is fully specified, so ranks are reproducible everywhere.
  std::mt19937_64 rng(cfg.rank_seed);
  for (auto& d : out.demands) {
    d.rank = static_cast<double>(1 + rng() % static_cast<std::uint64_t>(cfg.rank_levels));
  }

  try {
    out.validate();
  } catch (const CaseError& e) {
    throw ScenarioError(std::string("scenario produced an invalid case: ") + e.what());
  }
  return out;
}

const char* to_string(ShiftMode mode) {
  return mode == ShiftMode::AdditiveTotal ? "additive-total" : "multiplicative";
}

const char* to_string(DemandSetMode mode) {
  return mode == DemandSetMode::AllBuses ? "all-buses" : "loaded-buses";
}

ShiftMode parse_shift_mode(std::string_view text) {
  if (text == "additive-total") return ShiftMode::AdditiveTotal;
  if (text == "multiplicative") return ShiftMode::Multiplicative;
  throw std::invalid_argument("unknown shift_mode '" + std::string(text) + "'");
}

DemandSetMode parse_demand_set_mode(std::string_view text) {
  if (text == "all-buses") return DemandSetMode::AllBuses;
  if (text == "loaded-buses") return DemandSetMode::LoadedBuses;
  throw std::invalid_argument("unknown demand_set_mode '" + std::string(text) + "'");
}

}  // namespace aosbqp
