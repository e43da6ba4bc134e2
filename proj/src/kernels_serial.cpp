#include "sloc/kernels.hpp"

#include <stdexcept>

namespace sloc::kernels {

namespace detail {

void interval_residual(const SpMat& mass, double h, const Vec& u0, const Vec& u1, const Vec& g0,
                       const Vec& g1, Vec& out) {
  out = mass * (u1 - u0) / h + 0.5 * (g0 + g1);
}

std::size_t interval_triplet_count(const SpMat& mass, const SpMat& j0, const SpMat& j1) {
  return static_cast<std::size_t>(2 * mass.nonZeros() + j0.nonZeros() + j1.nonZeros());
}

void interval_triplets(const SpMat& mass, double h, const SpMat& j0, const SpMat& j1,
                       Eigen::Index row, Eigen::Index col, Triplet* out) {
  const Eigen::Index N = mass.rows();
  std::size_t pos = 0;
  for (Eigen::Index k = 0; k < mass.outerSize(); ++k) {
    for (SpMat::InnerIterator it(mass, k); it; ++it) {
      out[pos++] = Triplet(row + it.row(), col + k, -it.value() / h);
      out[pos++] = Triplet(row + it.row(), col + N + k, it.value() / h);
    }
  }
  for (Eigen::Index k = 0; k < j0.outerSize(); ++k) {
    for (SpMat::InnerIterator it(j0, k); it; ++it) {
      out[pos++] = Triplet(row + it.row(), col + k, 0.5 * it.value());
    }
  }
  for (Eigen::Index k = 0; k < j1.outerSize(); ++k) {
    for (SpMat::InnerIterator it(j1, k); it; ++it) {
      out[pos++] = Triplet(row + it.row(), col + N + k, 0.5 * it.value());
    }
  }
}

double interval_defect(const RateFunction& rate, double h, const Vec& u0, const Vec& u1,
                       const Vec& f0, const Vec& f1) {
  const Vec mid = 0.5 * (u0 + u1) + (h / 8.0) * (f0 - f1);
  const Vec slope = (1.5 / h) * (u1 - u0) - 0.25 * (f0 + f1);
  return (slope - rate(mid)).lpNorm<Eigen::Infinity>();
}

}  // namespace detail

namespace {

void check_sizes(std::span<const double> times, std::size_t states) {
  if (times.size() != states || times.size() < 2) {
    throw std::invalid_argument("kernels: time mesh and state list sizes differ");
  }
}

}  // namespace

namespace serial {

void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac) {
  g.resize(states.size());
  if (jac) jac->resize(states.size());
  for (std::size_t j = 0; j < states.size(); ++j) {
    fn(states[j], g[j], jac ? &(*jac)[j] : nullptr);
  }
}

void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out) {
  check_sizes(times, states.size());
  const std::size_t m = times.size() - 1;
  out.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    detail::interval_residual(mass, times[j + 1] - times[j], states[j], states[j + 1], g[j],
                              g[j + 1], out[j]);
  }
}

void collocation_triplets(const SpMat& mass, std::span<const double> times,
                          const std::vector<SpMat>& jac, Eigen::Index row_offset,
                          std::vector<Triplet>& out) {
  check_sizes(times, jac.size());
  const std::size_t m = times.size() - 1;
  const Eigen::Index N = mass.rows();
  std::vector<std::size_t> start(m + 1, 0);
  for (std::size_t j = 0; j < m; ++j) {
    start[j + 1] = start[j] + detail::interval_triplet_count(mass, jac[j], jac[j + 1]);
  }
  const std::size_t base = out.size();
  out.resize(base + start[m]);
  for (std::size_t j = 0; j < m; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    detail::interval_triplets(mass, times[j + 1] - times[j], jac[j], jac[j + 1],
                              row_offset + jj * N, jj * N, out.data() + base + start[j]);
  }
}

void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out) {
  check_sizes(times, states.size());
  const std::size_t m = times.size() - 1;
  out.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    out[j] = detail::interval_defect(rate, times[j + 1] - times[j], states[j], states[j + 1],
                                     rates[j], rates[j + 1]);
  }
}

}  // namespace serial

void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac, Backend backend) {
  if (backend == Backend::openmp) {
    omp::evaluate_slices(fn, states, g, jac);
  } else {
    serial::evaluate_slices(fn, states, g, jac);
  }
}

void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out, Backend backend) {
  if (backend == Backend::openmp) {
    omp::collocation_residuals(mass, times, states, g, out);
  } else {
    serial::collocation_residuals(mass, times, states, g, out);
  }
}

void collocation_triplets(const SpMat& mass, std::span<const double> times,
                          const std::vector<SpMat>& jac, Eigen::Index row_offset,
                          std::vector<Triplet>& out, Backend backend) {
  if (backend == Backend::openmp) {
    omp::collocation_triplets(mass, times, jac, row_offset, out);
  } else {
    serial::collocation_triplets(mass, times, jac, row_offset, out);
  }
}

void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out, Backend backend) {
  if (backend == Backend::openmp) {
    omp::midpoint_defects(rate, times, states, rates, out);
  } else {
    serial::midpoint_defects(rate, times, states, rates, out);
  }
}

}  // namespace sloc::kernels
