#include "aosbqp/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace aosbqp;

namespace {

// Ring plus random chords, so every bus has a handful of neighbors.
NeighborList synthetic_grid(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> gd(0.5, 5.0), bd(-20.0, -2.0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  NeighborList nb(static_cast<std::size_t>(n));
  auto link = [&](Eigen::Index a, Eigen::Index b) {
    const double g = gd(rng), s = bd(rng);
    nb[a].push_back({b, g, s});
    nb[b].push_back({a, g, s});
  };
  for (Eigen::Index k = 0; k < n; ++k) link(k, (k + 1) % n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index l = pick(rng);
    if (l != k && l != (k + 1) % n && (k + 1) % n != l) link(k, l);
  }
  return nb;
}

struct Fixture {
  NeighborList nb;
  Eigen::VectorXd v, theta;
  explicit Fixture(Eigen::Index n) : nb(synthetic_grid(n, 7)) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> vd(0.95, 1.05), td(-0.3, 0.3);
    v.resize(n);
    theta.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      v[k] = vd(rng);
      theta[k] = td(rng);
    }
  }
};

template <bool Parallel>
void BM_NodeOutflow(benchmark::State& st) {
  Fixture f(st.range(0));
  Eigen::VectorXd out(2 * st.range(0));
  for (auto _ : st) {
    if constexpr (Parallel) {
      kernels::node_outflow_parallel(f.nb, f.v, f.theta, out);
    } else {
      kernels::node_outflow_serial(f.nb, f.v, f.theta, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_OutflowJacobian(benchmark::State& st) {
  Fixture f(st.range(0));
  Eigen::MatrixXd out(2 * st.range(0), 2 * st.range(0));
  for (auto _ : st) {
    out.setZero();
    if constexpr (Parallel) {
      kernels::outflow_jacobian_parallel(f.nb, f.v, f.theta, out);
    } else {
      kernels::outflow_jacobian_serial(f.nb, f.v, f.theta, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_CentralDifference(benchmark::State& st) {
  Fixture f(st.range(0));
  const Eigen::Index n = st.range(0);
  kernels::VectorFunction fn = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd v(n), th(n), out(2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
      v[k] = x[2 * k];
      th[k] = x[2 * k + 1];
    }
    kernels::node_outflow_serial(f.nb, v, th, out);
    return out;
  };
  Eigen::VectorXd x(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    x[2 * k] = f.v[k];
    x[2 * k + 1] = f.theta[k];
  }
  for (auto _ : st) {
    Eigen::MatrixXd j = Parallel ? kernels::central_difference_parallel(fn, x, 1e-6)
                                 : kernels::central_difference_serial(fn, x, 1e-6);
    benchmark::DoNotOptimize(j.data());
  }
}

}  // namespace

BENCHMARK(BM_NodeOutflow<false>)->Arg(30)->Arg(300)->Arg(3000);
BENCHMARK(BM_NodeOutflow<true>)->Arg(30)->Arg(300)->Arg(3000);
BENCHMARK(BM_OutflowJacobian<false>)->Arg(30)->Arg(300)->Arg(1000);
BENCHMARK(BM_OutflowJacobian<true>)->Arg(30)->Arg(300)->Arg(1000);
BENCHMARK(BM_CentralDifference<false>)->Arg(30)->Arg(118);
BENCHMARK(BM_CentralDifference<true>)->Arg(30)->Arg(118);

BENCHMARK_MAIN();
