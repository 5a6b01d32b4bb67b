#include "aosbqp/kernels.hpp"

#include <cmath>

namespace aosbqp::kernels {

namespace {

// Flow contributions of bus k; shared by the serial and parallel loops.
inline void outflow_row(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                        Eigen::Index k, Eigen::Ref<Eigen::VectorXd> out) {
  const double vk = v[k];
  double p = 0.0, q = 0.0;
  for (const LineEnd& e : nb[k]) {
    const double t = theta[k] - theta[e.other];
    const double c = std::cos(t), s = std::sin(t);
    const double vkvl = vk * v[e.other];
    p += vk * vk * e.g - vkvl * (e.g * c + e.b * s);
    q += -vk * vk * e.b - vkvl * (e.g * s - e.b * c);
  }
  out[2 * k] = p;
  out[2 * k + 1] = q;
}

inline void jacobian_rows(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                          Eigen::Index k, Eigen::Ref<Eigen::MatrixXd> out) {
  const Eigen::Index rp = 2 * k, rq = 2 * k + 1;
  const Eigen::Index cv = 2 * k, ct = 2 * k + 1;
  const double vk = v[k];
  for (const LineEnd& e : nb[k]) {
    const Eigen::Index l = e.other;
    const double t = theta[k] - theta[l];
    const double c = std::cos(t), s = std::sin(t);
    const double vl = v[l];
    const double gc_bs = e.g * c + e.b * s;  // active coupling
    const double gs_bc = e.g * s - e.b * c;  // reactive coupling
    out(rp, cv) += 2.0 * vk * e.g - vl * gc_bs;
    out(rp, ct) += vk * vl * gs_bc;
    out(rp, 2 * l) += -vk * gc_bs;
    out(rp, 2 * l + 1) += -vk * vl * gs_bc;
    out(rq, cv) += -2.0 * vk * e.b - vl * gs_bc;
    out(rq, ct) += -vk * vl * gc_bs;
    out(rq, 2 * l) += -vk * gs_bc;
    out(rq, 2 * l + 1) += vk * vl * gc_bs;
  }
}

}  // namespace

void node_outflow_serial(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                         Eigen::Ref<Eigen::VectorXd> out) {
  const auto n = static_cast<Eigen::Index>(nb.size());
  for (Eigen::Index k = 0; k < n; ++k) outflow_row(nb, v, theta, k, out);
}

void node_outflow_parallel(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                           Eigen::Ref<Eigen::VectorXd> out) {
  const auto n = static_cast<Eigen::Index>(nb.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < n; ++k) outflow_row(nb, v, theta, k, out);
}

void outflow_jacobian_serial(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                             Eigen::Ref<Eigen::MatrixXd> out) {
  const auto n = static_cast<Eigen::Index>(nb.size());
  for (Eigen::Index k = 0; k < n; ++k) jacobian_rows(nb, v, theta, k, out);
}

void outflow_jacobian_parallel(const NeighborList& nb, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                               Eigen::Ref<Eigen::MatrixXd> out) {
  const auto n = static_cast<Eigen::Index>(nb.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < n; ++k) jacobian_rows(nb, v, theta, k, out);
}

Eigen::MatrixXd central_difference_serial(const VectorFunction& fn, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd f0 = fn(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp[j] = x[j] + h;
    const Eigen::VectorXd fp = fn(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd fm = fn(xp);
    xp[j] = x[j];
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

Eigen::MatrixXd central_difference_parallel(const VectorFunction& fn, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd f0 = fn(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x;
    xp[j] = x[j] + h;
    const Eigen::VectorXd fp = fn(xp);
    xp[j] = x[j] - h;
    const Eigen::VectorXd fm = fn(xp);
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

}  // namespace aosbqp::kernels
