#include "sloc/kernels.hpp"

#include <omp.h>

#include <exception>
#include <stdexcept>

namespace sloc::kernels::omp {

namespace {

// Exceptions must not escape an OpenMP region; keep the first one and
// rethrow after the loop.
class ExceptionSlot {
 public:
  template <class F>
  void run(F&& f) {
    try {
      f();
    } catch (...) {
#pragma omp critical(sloc_kernel_exception)
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::exception_ptr error_;
};

void check_sizes(std::span<const double> times, std::size_t states) {
  if (times.size() != states || times.size() < 2) {
    throw std::invalid_argument("kernels: time mesh and state list sizes differ");
  }
}

}  // namespace

void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac) {
  const auto count = static_cast<std::ptrdiff_t>(states.size());
  g.resize(states.size());
  if (jac) jac->resize(states.size());
  ExceptionSlot slot;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    slot.run([&] { fn(states[j], g[j], jac ? &(*jac)[j] : nullptr); });
  }
  slot.rethrow();
}

void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out) {
  check_sizes(times, states.size());
  const auto m = static_cast<std::ptrdiff_t>(times.size() - 1);
  out.resize(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
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
  const auto mm = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < mm; ++j) {
    detail::interval_triplets(mass, times[j + 1] - times[j], jac[j], jac[j + 1],
                              row_offset + j * N, j * N, out.data() + base + start[j]);
  }
}

void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out) {
  check_sizes(times, states.size());
  const auto m = static_cast<std::ptrdiff_t>(times.size() - 1);
  out.resize(m);
  ExceptionSlot slot;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < m; ++j) {
    slot.run([&] {
      out[j] = detail::interval_defect(rate, times[j + 1] - times[j], states[j], states[j + 1],
                                       rates[j], rates[j + 1]);
    });
  }
  slot.rethrow();
}

}  // namespace sloc::kernels::omp
