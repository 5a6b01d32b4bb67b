#include "aosbqp/ao1_opf.hpp"

#include "aosbqp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace aosbqp {

const char* to_string(Ao1Status s) {
  switch (s) {
    case Ao1Status::Converged: return "converged";
    case Ao1Status::MaxIterations: return "max-iterations";
    case Ao1Status::Infeasible: return "infeasible";
  }
  return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Decision vector z = (x without slack v/theta | u | s+ | s-), with the
// elastic balance c(z) = P(x) - S(u, y) - s+ + s- = 0.
class ElasticOpf {
 public:
  ElasticOpf(const PowerModel& model, const SwitchVector& y) : m_(model), y_(y) {
    n_ = model.num_buses();
    const Eigen::Index slack = model.slack();
    for (Eigen::Index i = 0; i < 2 * n_; ++i) {
      if (i / 2 != slack) xmap_.push_back(i);
    }
    nx_ = static_cast<Eigen::Index>(xmap_.size());
    nu_ = 2 * model.num_generators();
    ns_ = 2 * n_;
    nz_ = nx_ + nu_ + 2 * ns_;

    const Eigen::VectorXd xl = model.x_lower(), xu = model.x_upper();
    lo_.resize(nz_);
    hi_.resize(nz_);
    for (Eigen::Index i = 0; i < nx_; ++i) {
      lo_[i] = xl[xmap_[i]];
      hi_[i] = xu[xmap_[i]];
    }
    lo_.segment(nx_, nu_) = model.u_lower();
    hi_.segment(nx_, nu_) = model.u_upper();
    lo_.tail(2 * ns_).setZero();
    hi_.tail(2 * ns_).setConstant(kInf);
    for (Eigen::Index i = 0; i < nx_ + nu_; ++i) {
      if (hi_[i] - lo_[i] < 1e-8) {
        const double mid = 0.5 * (lo_[i] + hi_[i]);
        lo_[i] = mid - 5e-9;
        hi_[i] = mid + 5e-9;
      }
    }

    base_x_ = State::flat(model.grid()).stacked();
    weight_ = Eigen::VectorXd::Zero(2 * n_);
    for (Eigen::Index d = 0; d < model.num_demands(); ++d) {
      weight_[2 * model.demand_bus(d)] += y_[d] * model.grid().demands[d].rank;
    }
    const Eigen::VectorXd r = model.ranks();
    penalty_ = 100.0 * std::max(1.0, r.size() > 0 ? r.maxCoeff() : 1.0);
  }

  Eigen::Index nz() const { return nz_; }
  Eigen::Index nx() const { return nx_; }
  Eigen::Index nu() const { return nu_; }
  Eigen::Index ns() const { return ns_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  double penalty() const { return penalty_; }
  const std::vector<Eigen::Index>& xmap() const { return xmap_; }

  Eigen::VectorXd full_x(const Eigen::VectorXd& z) const {
    Eigen::VectorXd x = base_x_;
    for (Eigen::Index i = 0; i < nx_; ++i) x[xmap_[i]] = z[i];
    return x;
  }
  State state(const Eigen::VectorXd& z) const { return State::from_stacked(full_x(z)); }
  InputVector input(const Eigen::VectorXd& z) const { return InputVector::from_stacked(z.segment(nx_, nu_)); }

  Eigen::VectorXd balance(const Eigen::VectorXd& z) const {
    return m_.node_outflow(state(z)) - m_.supply(input(z), y_);
  }
  Eigen::VectorXd c(const Eigen::VectorXd& z) const {
    return balance(z) - z.segment(nx_ + nu_, ns_) + z.tail(ns_);
  }
  double f(const Eigen::VectorXd& z) const {
    return -m_.objective(state(z), input(z), y_) + penalty_ * z.tail(2 * ns_).sum();
  }

  // Gradient of f and Jacobian of c; dP/dx is passed in to share the evaluation.
  Eigen::VectorXd grad_f(const Eigen::MatrixXd& dp) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nz_);
    const Eigen::VectorXd gx = dp.transpose() * weight_;
    for (Eigen::Index i = 0; i < nx_; ++i) g[i] = gx[xmap_[i]];
    for (Eigen::Index d = 0; d < m_.num_demands(); ++d) {
      const int j = m_.generator_at(m_.demand_bus(d));
      if (j >= 0) g[nx_ + 2 * j] -= y_[d] * m_.grid().demands[d].rank;
    }
    g.tail(2 * ns_).setConstant(penalty_);
    return g;
  }

  Eigen::MatrixXd jac(const Eigen::MatrixXd& dp) const {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(ns_, nz_);
    for (Eigen::Index i = 0; i < nx_; ++i) j.col(i) = dp.col(xmap_[i]);
    for (Eigen::Index g = 0; g < m_.num_generators(); ++g) {
      j(2 * m_.generator_bus(g), nx_ + 2 * g) = -1.0;
      j(2 * m_.generator_bus(g) + 1, nx_ + 2 * g + 1) = -1.0;
    }
    j.middleCols(nx_ + nu_, ns_) = -Eigen::MatrixXd::Identity(ns_, ns_);
    j.rightCols(ns_) = Eigen::MatrixXd::Identity(ns_, ns_);
    return j;
  }

  Eigen::MatrixXd outflow_jac(const Eigen::VectorXd& z) const { return m_.outflow_jacobian(state(z)); }

  // Hessian of f + lambda^T c in the reduced x block: central differences of
  // dP/dx^T (lambda + w), where w carries the y r weights of the objective.
  Eigen::MatrixXd hessian_x(const Eigen::VectorXd& z, const Eigen::VectorXd& lambda) const {
    const Eigen::VectorXd omega = lambda + weight_;
    const Eigen::VectorXd x0 = z.head(nx_);
    kernels::VectorFunction grad = [&](const Eigen::VectorXd& xr) {
      Eigen::VectorXd zz = z;
      zz.head(nx_) = xr;
      const Eigen::VectorXd full = m_.outflow_jacobian(state(zz)).transpose() * omega;
      Eigen::VectorXd out(nx_);
      for (Eigen::Index i = 0; i < nx_; ++i) out[i] = full[xmap_[i]];
      return out;
    };
    constexpr double h = 1e-5;
    Eigen::MatrixXd w = nx_ >= kernels::kParallelBusThreshold ? kernels::central_difference_parallel(grad, x0, h)
                                                              : kernels::central_difference_serial(grad, x0, h);
    return 0.5 * (w + w.transpose());
  }

 private:
  const PowerModel& m_;
  SwitchVector y_;
  Eigen::Index n_ = 0, nx_ = 0, nu_ = 0, ns_ = 0, nz_ = 0;
  std::vector<Eigen::Index> xmap_;
  Eigen::VectorXd lo_, hi_, base_x_, weight_;
  double penalty_ = 100.0;
};

struct Iterate {
  Eigen::VectorXd z, lambda, zl, zu;
};

double barrier(const ElasticOpf& p, const Eigen::VectorXd& z, double mu) {
  double v = p.f(z);
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (std::isfinite(p.lo()[i])) {
      const double gap = z[i] - p.lo()[i];
      if (!(gap > 0)) return kInf;
      v -= mu * std::log(gap);
    }
    if (std::isfinite(p.hi()[i])) {
      const double gap = p.hi()[i] - z[i];
      if (!(gap > 0)) return kInf;
      v -= mu * std::log(gap);
    }
  }
  return v;
}

Eigen::VectorXd push_interior(const ElasticOpf& p, Eigen::VectorXd z, double kappa) {
  for (Eigen::Index i = 0; i < p.nx() + p.nu(); ++i) {
    const double lo = p.lo()[i], hi = p.hi()[i];
    const double pl = std::min(kappa * std::max(1.0, std::abs(lo)), 0.5 * (hi - lo) * 0.99);
    const double ph = std::min(kappa * std::max(1.0, std::abs(hi)), 0.5 * (hi - lo) * 0.99);
    z[i] = std::clamp(z[i], lo + pl, hi - ph);
  }
  return z;
}

struct FilterEntry {
  double theta, phi;
};

}  // namespace

Ao1Result solve_ao1(const PowerModel& model, const SwitchVector& y, const std::optional<Ao1Warm>& warm,
                    const Ao1Options& opts) {
  const ElasticOpf prob(model, y);
  const Eigen::Index nz = prob.nz(), nx = prob.nx(), nu = prob.nu(), ns = prob.ns();
  const Eigen::Index nxu = nx + nu;
  const ConstraintLayout lay = model.layout();
  const double M = prob.penalty();
  const auto& lo = prob.lo();
  const auto& hi = prob.hi();

  double mu = warm ? opts.mu_min : opts.mu0;
  Iterate it;
  it.z = Eigen::VectorXd::Zero(nz);
  {
    const State x0 = warm ? warm->state : State::flat(model.grid());
    const InputVector u0 = warm ? warm->input : InputVector::midpoint(model.grid());
    const Eigen::VectorXd xs = x0.stacked();
    for (Eigen::Index i = 0; i < nx; ++i) it.z[i] = xs[prob.xmap()[i]];
    it.z.segment(nx, nu) = u0.stacked();
    it.z = push_interior(prob, it.z, warm ? 1e-10 : 1e-2);
  }

  // Balance duals from the warm start, or least squares after the bound duals
  // are set for the cold start.
  it.lambda = Eigen::VectorXd::Zero(ns);
  if (warm && warm->duals) {
    const Eigen::VectorXd& d = *warm->duals;
    it.lambda = d.segment(lay.balance_pos(), ns) - d.segment(lay.balance_neg(), ns);
  }

  // Elastic variables absorb the initial balance residual exactly.
  {
    const Eigen::VectorXd h = prob.balance(it.z);
    for (Eigen::Index i = 0; i < ns; ++i) {
      const double zp = warm ? std::max(M - it.lambda[i], 1e-8 * M) : 1.0;
      const double zm = warm ? std::max(M + it.lambda[i], 1e-8 * M) : 1.0;
      const double base_p = warm ? mu / zp : 0.1;
      const double base_m = warm ? mu / zm : 0.1;
      const double absorb = warm && std::abs(h[i]) <= 0.5 * opts.tol_feas ? 0.0 : h[i];
      it.z[nxu + i] = std::max(absorb, 0.0) + base_p;
      it.z[nxu + ns + i] = std::max(-absorb, 0.0) + base_m;
    }
  }

  it.zl = Eigen::VectorXd::Zero(nz);
  it.zu = Eigen::VectorXd::Zero(nz);
  for (Eigen::Index i = 0; i < nz; ++i) {
    if (std::isfinite(lo[i])) it.zl[i] = mu / (it.z[i] - lo[i]);
    if (std::isfinite(hi[i])) it.zu[i] = mu / (hi[i] - it.z[i]);
  }
  if (warm && warm->duals) {
    const Eigen::VectorXd& d = *warm->duals;
    for (Eigen::Index i = 0; i < nx; ++i) {
      it.zl[i] = std::max(it.zl[i], d[lay.x_lower() + prob.xmap()[i]]);
      it.zu[i] = std::max(it.zu[i], d[lay.x_upper() + prob.xmap()[i]]);
    }
    for (Eigen::Index i = 0; i < nu; ++i) {
      it.zl[nx + i] = std::max(it.zl[nx + i], d[lay.u_lower() + i]);
      it.zu[nx + i] = std::max(it.zu[nx + i], d[lay.u_upper() + i]);
    }
    for (Eigen::Index i = 0; i < ns; ++i) {
      it.zl[nxu + i] = std::max(M - it.lambda[i], mu / it.z[nxu + i]);
      it.zl[nxu + ns + i] = std::max(M + it.lambda[i], mu / it.z[nxu + ns + i]);
    }
  } else {
    const Eigen::MatrixXd dp = prob.outflow_jac(it.z);
    const Eigen::MatrixXd J = prob.jac(dp);
    const Eigen::VectorXd rhs = -(J * (prob.grad_f(dp) - it.zl + it.zu));
    Eigen::VectorXd lam = (J * J.transpose()).ldlt().solve(rhs);
    if (!lam.allFinite() || lam.lpNorm<Eigen::Infinity>() > 1e3) lam.setZero();
    it.lambda = lam;
  }

  std::vector<FilterEntry> filter;
  double delta_last = 0.0;
  Ao1Result res;
  bool converged = false;
  double dual_inf = kInf;
  int iter = 0;

  for (;; ++iter) {
    const Eigen::MatrixXd dp = prob.outflow_jac(it.z);
    const Eigen::MatrixXd J = prob.jac(dp);
    const Eigen::VectorXd gf = prob.grad_f(dp);
    const Eigen::VectorXd cz = prob.c(it.z);

    Eigen::VectorXd gap_l = Eigen::VectorXd::Constant(nz, kInf), gap_u = Eigen::VectorXd::Constant(nz, kInf);
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(lo[i])) gap_l[i] = it.z[i] - lo[i];
      if (std::isfinite(hi[i])) gap_u[i] = hi[i] - it.z[i];
    }
    const Eigen::VectorXd rd = gf + J.transpose() * it.lambda - it.zl + it.zu;
    auto compl_err = [&](double target) {
      double e = 0.0;
      for (Eigen::Index i = 0; i < nz; ++i) {
        if (std::isfinite(gap_l[i])) e = std::max(e, std::abs(gap_l[i] * it.zl[i] - target));
        if (std::isfinite(gap_u[i])) e = std::max(e, std::abs(gap_u[i] * it.zu[i] - target));
      }
      return e;
    };
    dual_inf = rd.lpNorm<Eigen::Infinity>();
    const double primal_inf = cz.lpNorm<Eigen::Infinity>();
    res.kkt_residual = rd.head(nxu).lpNorm<Eigen::Infinity>();
    if (dual_inf <= opts.tol_kkt && primal_inf <= opts.tol_feas && compl_err(0.0) <= opts.tol_comp) {
      converged = true;
      break;
    }
    if (iter >= opts.max_iterations) break;

    // Monotone barrier update.
    while (mu > opts.mu_min && std::max({dual_inf, primal_inf, compl_err(mu)}) <= 10.0 * mu) {
      mu = std::max(opts.mu_min, std::min(0.2 * mu, std::pow(mu, 1.5)));
      filter.clear();
    }

    Eigen::VectorXd sigma = Eigen::VectorXd::Zero(nz);
    Eigen::VectorXd r = gf + J.transpose() * it.lambda;
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(gap_l[i])) {
        sigma[i] += it.zl[i] / gap_l[i];
        r[i] -= mu / gap_l[i];
      }
      if (std::isfinite(gap_u[i])) {
        sigma[i] += it.zu[i] / gap_u[i];
        r[i] += mu / gap_u[i];
      }
    }

    Eigen::MatrixXd H = sigma.asDiagonal();
    H.topLeftCorner(nx, nx) += prob.hessian_x(it.z, it.lambda);

    // Inertia correction: H + delta I must be positive definite on the null
    // space of J, which has full row rank through the elastic columns.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(J.transpose());
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(nz, nz);
    const Eigen::MatrixXd Z = q.rightCols(nz - ns);
    const Eigen::MatrixXd zhz = Z.transpose() * H * Z;
    double delta = 0.0;
    if (Eigen::LLT<Eigen::MatrixXd>(zhz).info() != Eigen::Success) {
      delta = delta_last > 0 ? std::max(1e-8, delta_last / 3.0) : 1e-4;
      while (Eigen::LLT<Eigen::MatrixXd>(zhz + delta * Eigen::MatrixXd::Identity(nz - ns, nz - ns)).info() !=
             Eigen::Success) {
        delta *= 8.0;
      }
      delta_last = delta;
      H.diagonal().array() += delta;
    }

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nz + ns, nz + ns);
    kkt.topLeftCorner(nz, nz) = H;
    kkt.topRightCorner(nz, ns) = J.transpose();
    kkt.bottomLeftCorner(ns, nz) = J;
    Eigen::VectorXd rhs(nz + ns);
    rhs << -r, -cz;
    const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
    const Eigen::VectorXd dz = sol.head(nz);
    const Eigen::VectorXd dlam = sol.tail(ns);

    Eigen::VectorXd dzl = Eigen::VectorXd::Zero(nz), dzu = Eigen::VectorXd::Zero(nz);
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(gap_l[i])) dzl[i] = mu / gap_l[i] - it.zl[i] - it.zl[i] / gap_l[i] * dz[i];
      if (std::isfinite(gap_u[i])) dzu[i] = mu / gap_u[i] - it.zu[i] + it.zu[i] / gap_u[i] * dz[i];
    }

    const double tau = std::max(0.99, 1.0 - mu);
    double amax = 1.0, az = 1.0;
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(gap_l[i]) && dz[i] < 0) amax = std::min(amax, -tau * gap_l[i] / dz[i]);
      if (std::isfinite(gap_u[i]) && dz[i] > 0) amax = std::min(amax, tau * gap_u[i] / dz[i]);
      if (dzl[i] < 0) az = std::min(az, -tau * it.zl[i] / dzl[i]);
      if (dzu[i] < 0) az = std::min(az, -tau * it.zu[i] / dzu[i]);
    }

    // Filter line search on (||c||_1, barrier objective).
    const double theta0 = cz.lpNorm<1>();
    const double phi0 = barrier(prob, it.z, mu);
    Eigen::VectorXd gphi = gf;
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(gap_l[i])) gphi[i] -= mu / gap_l[i];
      if (std::isfinite(gap_u[i])) gphi[i] += mu / gap_u[i];
    }
    const double slope = gphi.dot(dz);
    const double theta_min = 1e-4 * std::max(1.0, theta0);
    double alpha = amax;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
      const Eigen::VectorXd zt = it.z + alpha * dz;
      const double th = prob.c(zt).lpNorm<1>();
      const double ph = barrier(prob, zt, mu);
      if (!std::isfinite(ph) || !std::isfinite(th)) continue;
      bool dominated = false;
      for (const auto& e : filter) {
        if (th >= e.theta && ph >= e.phi) dominated = true;
      }
      if (dominated) continue;
      if (theta0 <= theta_min && slope < 0) {
        if (ph <= phi0 + 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
      } else if (th <= (1.0 - 1e-5) * theta0 || ph <= phi0 - 1e-5 * theta0) {
        filter.push_back({(1.0 - 1e-5) * theta0, phi0 - 1e-5 * theta0});
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      alpha = amax;
      filter.clear();
    }

    it.z += alpha * dz;
    it.lambda += alpha * dlam;
    it.zl += az * dzl;
    it.zu += az * dzu;
    constexpr double kSigma = 1e10;
    for (Eigen::Index i = 0; i < nz; ++i) {
      if (std::isfinite(lo[i])) {
        const double gap = it.z[i] - lo[i];
        it.zl[i] = std::clamp(it.zl[i], mu / (kSigma * gap), kSigma * mu / gap);
      }
      if (std::isfinite(hi[i])) {
        const double gap = hi[i] - it.z[i];
        it.zu[i] = std::clamp(it.zu[i], mu / (kSigma * gap), kSigma * mu / gap);
      }
    }
  }

  res.iterations = iter;
  res.state = prob.state(it.z);
  res.input = prob.input(it.z);
  res.objective = model.objective(res.state, res.input, y);
  res.balance_residual = prob.balance(it.z).lpNorm<Eigen::Infinity>();

  res.duals = Eigen::VectorXd::Zero(lay.size());
  for (Eigen::Index i = 0; i < ns; ++i) {
    res.duals[lay.balance_pos() + i] = std::max(it.lambda[i], 0.0);
    res.duals[lay.balance_neg() + i] = std::max(-it.lambda[i], 0.0);
  }
  for (Eigen::Index i = 0; i < nx; ++i) {
    res.duals[lay.x_lower() + prob.xmap()[i]] = it.zl[i];
    res.duals[lay.x_upper() + prob.xmap()[i]] = it.zu[i];
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    res.duals[lay.u_lower() + i] = it.zl[nx + i];
    res.duals[lay.u_upper() + i] = it.zu[nx + i];
  }

  if (!converged) {
    res.status = Ao1Status::MaxIterations;
  } else if (res.balance_residual > opts.tol_infeasible) {
    res.status = Ao1Status::Infeasible;
  } else {
    res.status = Ao1Status::Converged;
  }
  return res;
}

}  // namespace aosbqp
