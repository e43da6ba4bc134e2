// Serial reference against the OpenMP kernels on a realistic time mesh
// (n = 101 nodes, 400 intervals), plus one full boundary value solve.

#include "sloc/bvp.hpp"
#include "sloc/css.hpp"
#include "sloc/kernels.hpp"
#include "sloc/spectral.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

using namespace sloc;
namespace k = sloc::kernels;

namespace {

struct Setup {
  SystemOperators sys;
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> g;
  std::vector<SpMat> jac;
  std::vector<Vec> rates;
  k::SliceFunction fn;
  k::RateFunction rate;

  Setup() {
    sys = SystemOperators::make(ModelParams{}, build_mesh(2 * std::numbers::pi / 0.44, 101));
    const int n = sys.nodes();
    for (int j = 0; j <= 400; ++j) {
      const double t = 100.0 * std::pow(j / 400.0, 1.5);
      times.push_back(t);
      Vec u(2 * n);
      for (int i = 0; i < n; ++i) {
        const double x = sys.mesh.nodes[i];
        u[i] = 0.8 + 0.3 * std::exp(-0.05 * t) * std::cos(0.44 * x);
        u[n + i] = -7.0 + 0.5 * std::exp(-0.05 * t) * std::sin(0.44 * x);
      }
      states.push_back(u);
    }
    fn = [this](const Vec& u, Vec& out, SpMat* J) {
      out = residual(u, sys) - sys.block_k * u;
      if (J) *J = jacobian(u, sys) - sys.block_k;
    };
    rate = [this](const Vec& u) { return evolution_rate(u, sys); };
    k::serial::evaluate_slices(fn, states, g, &jac);
    for (const auto& u : states) rates.push_back(rate(u));
  }
};

Setup& setup() {
  static Setup s;
  return s;
}

k::Backend backend_of(const benchmark::State& state) {
  return state.range(0) == 0 ? k::Backend::serial : k::Backend::openmp;
}

void BM_EvaluateSlices(benchmark::State& state) {
  Setup& s = setup();
  std::vector<Vec> g;
  std::vector<SpMat> jac;
  for (auto _ : state) {
    k::evaluate_slices(s.fn, s.states, g, &jac, backend_of(state));
    benchmark::DoNotOptimize(g.data());
  }
}

void BM_CollocationResiduals(benchmark::State& state) {
  Setup& s = setup();
  std::vector<Vec> out;
  for (auto _ : state) {
    k::collocation_residuals(s.sys.block_m, s.times, s.states, s.g, out, backend_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_CollocationTriplets(benchmark::State& state) {
  Setup& s = setup();
  std::vector<k::Triplet> out;
  for (auto _ : state) {
    k::collocation_triplets(s.sys.block_m, s.times, s.jac, 0, out, backend_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_MidpointDefects(benchmark::State& state) {
  Setup& s = setup();
  std::vector<double> out;
  for (auto _ : state) {
    k::midpoint_defects(s.rate, s.times, s.states, s.rates, out, backend_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_PathSolve(benchmark::State& state) {
  Setup& s = setup();
  const FlatRoot r = fcss_roots(s.sys.params)[2];
  const CssRecord fsm = newton_css(flat_state(r.P, r.q, s.sys.nodes()), s.sys);
  const ProjectionPsi psi = build_psi(fsm.u, s.sys);
  Vec P0(s.sys.nodes());
  for (int i = 0; i < P0.size(); ++i) P0[i] = r.P - 0.2 + 0.2 * std::cos(0.44 * s.sys.mesh.nodes[i]);
  BvpOptions opts;
  opts.backend = backend_of(state);
  opts.refine = false;
  const BvpProblem pb{&s.sys, &psi, P0, 1.0};
  const PathSolution guess = constant_path(fsm.u, 100.0, 200);
  for (auto _ : state) {
    const PathSolution p = bvp_solve(pb, guess, opts);
    benchmark::DoNotOptimize(p.J);
  }
}

}  // namespace

BENCHMARK(BM_EvaluateSlices)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollocationResiduals)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollocationTriplets)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MidpointDefects)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PathSolve)->Arg(0)->Arg(1)->ArgName("omp")->Unit(benchmark::kMillisecond)->Iterations(3);

BENCHMARK_MAIN();
