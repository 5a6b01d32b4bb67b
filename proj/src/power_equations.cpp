#include "aosbqp/power_equations.hpp"

#include "aosbqp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace aosbqp {

State State::flat(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.num_buses());
  State s{Eigen::VectorXd(n), Eigen::VectorXd::Zero(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    const Bus& bus = grid.buses[k];
    s.v[k] = std::clamp(bus.v_set, bus.v_min, bus.v_max);
    s.theta[k] = std::clamp(0.0, bus.theta_min, bus.theta_max);
  }
  return s;
}

Eigen::VectorXd State::stacked() const {
  Eigen::VectorXd x(2 * v.size());
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    x[2 * k] = v[k];
    x[2 * k + 1] = theta[k];
  }
  return x;
}

State State::from_stacked(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size() / 2;
  State s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    s.v[k] = x[2 * k];
    s.theta[k] = x[2 * k + 1];
  }
  return s;
}

InputVector InputVector::midpoint(const GridCase& grid) {
  const auto g = static_cast<Eigen::Index>(grid.num_generators());
  InputVector u{Eigen::VectorXd(g), Eigen::VectorXd(g)};
  for (Eigen::Index j = 0; j < g; ++j) {
    const Generator& gen = grid.generators[j];
    u.pg[j] = 0.5 * (gen.pg_min + gen.pg_max);
    u.qg[j] = 0.5 * (gen.qg_min + gen.qg_max);
  }
  return u;
}

Eigen::VectorXd InputVector::stacked() const {
  Eigen::VectorXd out(2 * pg.size());
  for (Eigen::Index j = 0; j < pg.size(); ++j) {
    out[2 * j] = pg[j];
    out[2 * j + 1] = qg[j];
  }
  return out;
}

InputVector InputVector::from_stacked(const Eigen::VectorXd& u) {
  const Eigen::Index g = u.size() / 2;
  InputVector out{Eigen::VectorXd(g), Eigen::VectorXd(g)};
  for (Eigen::Index j = 0; j < g; ++j) {
    out.pg[j] = u[2 * j];
    out.qg[j] = u[2 * j + 1];
  }
  return out;
}

NeighborList build_neighbors(const GridCase& grid) {
  NeighborList nb(grid.num_buses());
  for (const Branch& br : grid.branches) {
    const auto k = static_cast<Eigen::Index>(grid.bus_index(br.from));
    const auto l = static_cast<Eigen::Index>(grid.bus_index(br.to));
    nb[k].push_back({l, br.g, br.b});
    nb[l].push_back({k, br.g, br.b});
  }
  return nb;
}

PowerModel::PowerModel(GridCase grid)
    : grid_(std::move(grid)),
      admittance_(build_admittance(grid_)),
      neighbors_(build_neighbors(grid_)),
      n_(static_cast<Eigen::Index>(grid_.num_buses())),
      g_(static_cast<Eigen::Index>(grid_.num_generators())),
      d_(static_cast<Eigen::Index>(grid_.num_demands())),
      slack_(static_cast<Eigen::Index>(grid_.slack_index())),
      gen_at_(grid_.generator_at_bus()),
      demand_at_(grid_.demand_at_bus()) {
  for (const auto& gen : grid_.generators) gen_bus_.push_back(static_cast<Eigen::Index>(grid_.bus_index(gen.bus)));
  for (const auto& d : grid_.demands) demand_bus_.push_back(static_cast<Eigen::Index>(grid_.bus_index(d.bus)));
}

std::pair<double, double> PowerModel::line_flow(const State& x, Eigen::Index k, Eigen::Index l) const {
  if (k < 0 || k >= n_ || l < 0 || l >= n_) throw std::domain_error("line_flow: bus index out of range");
  for (const LineEnd& e : neighbors_[k]) {
    if (e.other != l) continue;
    const double t = x.theta[k] - x.theta[l];
    const double c = std::cos(t), s = std::sin(t);
    const double vk = x.v[k], vl = x.v[l];
    return {vk * vk * e.g - vk * vl * (e.g * c + e.b * s), -vk * vk * e.b - vk * vl * (-e.b * c + e.g * s)};
  }
  throw std::domain_error("line_flow: buses " + std::to_string(grid_.buses[k].id) + " and " +
                          std::to_string(grid_.buses[l].id) + " are not connected");
}

PowerVector PowerModel::node_outflow(const State& x) const {
  PowerVector out(2 * n_);
  if (n_ >= kernels::kParallelBusThreshold) {
    kernels::node_outflow_parallel(neighbors_, x.v, x.theta, out);
  } else {
    kernels::node_outflow_serial(neighbors_, x.v, x.theta, out);
  }
  return out;
}

PowerVector PowerModel::supply(const InputVector& u, const SwitchVector& y) const {
  PowerVector s = PowerVector::Zero(2 * n_);
  for (Eigen::Index j = 0; j < g_; ++j) {
    s[2 * gen_bus_[j]] += u.pg[j];
    s[2 * gen_bus_[j] + 1] += u.qg[j];
  }
  for (Eigen::Index d = 0; d < d_; ++d) {
    const double y2 = y[d] * y[d];
    s[2 * demand_bus_[d]] -= y2 * grid_.demands[d].pd;
    s[2 * demand_bus_[d] + 1] -= y2 * grid_.demands[d].qd;
  }
  return s;
}

double PowerModel::objective(const State& x, const InputVector& u, const SwitchVector& y) const {
  const auto& G = admittance_.G;
  const auto& B = admittance_.B;
  double e = 0.0;
  for (Eigen::Index d = 0; d < d_; ++d) {
    const Eigen::Index k = demand_bus_[d];
    double inner = 0.0;
    for (Eigen::Index l = 0; l < n_; ++l) {
      if (G(k, l) == 0.0 && B(k, l) == 0.0) continue;
      const double t = x.theta[k] - x.theta[l];
      inner += x.v[l] * (G(k, l) * std::cos(t) + B(k, l) * std::sin(t));
    }
    const double pg = gen_at_[k] >= 0 ? u.pg[gen_at_[k]] : 0.0;
    e += y[d] * grid_.demands[d].rank * (pg - x.v[k] * inner);
  }
  return e;
}

Eigen::VectorXd PowerModel::x_lower() const {
  Eigen::VectorXd lo(2 * n_);
  for (Eigen::Index k = 0; k < n_; ++k) {
    lo[2 * k] = grid_.buses[k].v_min;
    lo[2 * k + 1] = grid_.buses[k].theta_min;
  }
  return lo;
}

Eigen::VectorXd PowerModel::x_upper() const {
  Eigen::VectorXd hi(2 * n_);
  for (Eigen::Index k = 0; k < n_; ++k) {
    hi[2 * k] = grid_.buses[k].v_max;
    hi[2 * k + 1] = grid_.buses[k].theta_max;
  }
  return hi;
}

Eigen::VectorXd PowerModel::u_lower() const {
  Eigen::VectorXd lo(2 * g_);
  for (Eigen::Index j = 0; j < g_; ++j) {
    lo[2 * j] = grid_.generators[j].pg_min;
    lo[2 * j + 1] = grid_.generators[j].qg_min;
  }
  return lo;
}

Eigen::VectorXd PowerModel::u_upper() const {
  Eigen::VectorXd hi(2 * g_);
  for (Eigen::Index j = 0; j < g_; ++j) {
    hi[2 * j] = grid_.generators[j].pg_max;
    hi[2 * j + 1] = grid_.generators[j].qg_max;
  }
  return hi;
}

Eigen::VectorXd PowerModel::demand_p() const {
  Eigen::VectorXd out(d_);
  for (Eigen::Index d = 0; d < d_; ++d) out[d] = grid_.demands[d].pd;
  return out;
}

Eigen::VectorXd PowerModel::demand_q() const {
  Eigen::VectorXd out(d_);
  for (Eigen::Index d = 0; d < d_; ++d) out[d] = grid_.demands[d].qd;
  return out;
}

Eigen::VectorXd PowerModel::ranks() const {
  Eigen::VectorXd out(d_);
  for (Eigen::Index d = 0; d < d_; ++d) out[d] = grid_.demands[d].rank;
  return out;
}

Eigen::VectorXd PowerModel::constraints(const State& x, const InputVector& u, const SwitchVector& y) const {
  const ConstraintLayout lay = layout();
  Eigen::VectorXd c(lay.size());
  const PowerVector h = node_outflow(x) - supply(u, y);
  const Eigen::VectorXd xs = x.stacked();
  const Eigen::VectorXd us = u.stacked();
  c.segment(lay.balance_pos(), 2 * n_) = h;
  c.segment(lay.balance_neg(), 2 * n_) = -h;
  c.segment(lay.x_lower(), 2 * n_) = x_lower() - xs;
  c.segment(lay.x_upper(), 2 * n_) = xs - x_upper();
  c.segment(lay.u_lower(), 2 * g_) = u_lower() - us;
  c.segment(lay.u_upper(), 2 * g_) = us - u_upper();
  return c;
}

Eigen::MatrixXd PowerModel::outflow_jacobian(const State& x) const {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n_, 2 * n_);
  if (n_ >= kernels::kParallelBusThreshold) {
    kernels::outflow_jacobian_parallel(neighbors_, x.v, x.theta, jac);
  } else {
    kernels::outflow_jacobian_serial(neighbors_, x.v, x.theta, jac);
  }
  return jac;
}

Jacobians PowerModel::jacobians(const State& x, const InputVector& u, const SwitchVector& y) const {
  const ConstraintLayout lay = layout();
  const Eigen::Index nx = 2 * n_, nu = 2 * g_, cols = nx + nu + d_;
  const Eigen::Index col_u = nx, col_y = nx + nu;

  Jacobians out;
  out.dP_dx = outflow_jacobian(x);
  const PowerVector p = node_outflow(x);

  out.dE = Eigen::VectorXd::Zero(cols);
  for (Eigen::Index d = 0; d < d_; ++d) {
    const Eigen::Index k = demand_bus_[d];
    const double w = y[d] * grid_.demands[d].rank;
    out.dE.head(nx) -= w * out.dP_dx.row(2 * k).transpose();
    const int j = gen_at_[k];
    double pg = 0.0;
    if (j >= 0) {
      out.dE[col_u + 2 * j] += w;
      pg = u.pg[j];
    }
    out.dE[col_y + d] = grid_.demands[d].rank * (pg - p[2 * k]);
  }

  // Balance block h = P(x) - S(u, y); the second block is its negation.
  Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(2 * n_, cols);
  dh.leftCols(nx) = out.dP_dx;
  for (Eigen::Index j = 0; j < g_; ++j) {
    dh(2 * gen_bus_[j], col_u + 2 * j) = -1.0;
    dh(2 * gen_bus_[j] + 1, col_u + 2 * j + 1) = -1.0;
  }
  for (Eigen::Index d = 0; d < d_; ++d) {
    dh(2 * demand_bus_[d], col_y + d) = 2.0 * y[d] * grid_.demands[d].pd;
    dh(2 * demand_bus_[d] + 1, col_y + d) = 2.0 * y[d] * grid_.demands[d].qd;
  }

  out.dC = Eigen::MatrixXd::Zero(lay.size(), cols);
  out.dC.middleRows(lay.balance_pos(), 2 * n_) = dh;
  out.dC.middleRows(lay.balance_neg(), 2 * n_) = -dh;
  for (Eigen::Index i = 0; i < nx; ++i) {
    out.dC(lay.x_lower() + i, i) = -1.0;
    out.dC(lay.x_upper() + i, i) = 1.0;
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    out.dC(lay.u_lower() + i, col_u + i) = -1.0;
    out.dC(lay.u_upper() + i, col_u + i) = 1.0;
  }
  return out;
}

Eigen::MatrixXd PowerModel::hessian_y(const Eigen::VectorXd& duals) const {
  const ConstraintLayout lay = layout();
  if (duals.size() != lay.size()) throw std::invalid_argument("hessian_y: dual vector has wrong dimension");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d_, d_);
  for (Eigen::Index d = 0; d < d_; ++d) {
    const Eigen::Index k = demand_bus_[d];
    const double net_p = duals[lay.balance_pos() + 2 * k] - duals[lay.balance_neg() + 2 * k];
    const double net_q = duals[lay.balance_pos() + 2 * k + 1] - duals[lay.balance_neg() + 2 * k + 1];
    q(d, d) = -2.0 * (net_p * grid_.demands[d].pd + net_q * grid_.demands[d].qd);
  }
  return q;
}

double phi(const SwitchVector& y) { return y.dot(Eigen::VectorXd::Ones(y.size()) - y); }

Eigen::VectorXd grad_phi(const SwitchVector& y) { return Eigen::VectorXd::Ones(y.size()) - 2.0 * y; }

double delivered_objective(const GridCase& grid, const SwitchVector& y) {
  double f = 0.0;
  for (std::size_t d = 0; d < grid.demands.size(); ++d) {
    f += y[static_cast<Eigen::Index>(d)] * grid.demands[d].rank * grid.demands[d].pd;
  }
  return f;
}

}  // namespace aosbqp
