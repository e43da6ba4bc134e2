#pragma once

// Data-parallel loops of the connecting-orbit solver. Every loop runs over
// time slices or intervals which are independent of each other. The serial
// variants are the reference; the OpenMP variants must reproduce them
// bit-for-bit (each slice writes only to its own output range).

#include "sloc/fem1d.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <span>
#include <vector>

namespace sloc::kernels {

enum class Backend { serial, openmp };

using Triplet = Eigen::Triplet<double>;

/// Evaluates the slice field g(u) and optionally its Jacobian. Must be safe to
/// call concurrently on different states.
using SliceFunction = std::function<void(const Vec& u, Vec& g, SpMat* jac)>;

/// Rate form of the dynamics, du/dt = rate(u). Same thread-safety contract.
using RateFunction = std::function<Vec(const Vec& u)>;

void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac, Backend backend);

/// out[j] = mass (u_{j+1} - u_j) / h_j + (g_j + g_{j+1}) / 2
void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out, Backend backend);

/// Triplets of d out[j] / d(u_j, u_{j+1}). Interval j occupies rows
/// row_offset + j*N .. and columns j*N .. (j+2)*N, N the slice dimension.
void collocation_triplets(const SpMat& mass, std::span<const double> times,
                          const std::vector<SpMat>& jac, Eigen::Index row_offset,
                          std::vector<Triplet>& out, Backend backend);

/// Max-norm defect of the cubic Hermite interpolant at each interval midpoint,
/// given endpoint rates.
void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out, Backend backend);

namespace serial {
void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac);
void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out);
void collocation_triplets(const SpMat& mass, std::span<const double> times,
                          const std::vector<SpMat>& jac, Eigen::Index row_offset,
                          std::vector<Triplet>& out);
void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out);
}  // namespace serial

namespace omp {
void evaluate_slices(const SliceFunction& fn, const std::vector<Vec>& states,
                     std::vector<Vec>& g, std::vector<SpMat>* jac);
void collocation_residuals(const SpMat& mass, std::span<const double> times,
                           const std::vector<Vec>& states, const std::vector<Vec>& g,
                           std::vector<Vec>& out);
void collocation_triplets(const SpMat& mass, std::span<const double> times,
                          const std::vector<SpMat>& jac, Eigen::Index row_offset,
                          std::vector<Triplet>& out);
void midpoint_defects(const RateFunction& rate, std::span<const double> times,
                      const std::vector<Vec>& states, const std::vector<Vec>& rates,
                      std::vector<double>& out);
}  // namespace omp

namespace detail {
// Shared per-interval bodies so both backends run identical arithmetic.
void interval_residual(const SpMat& mass, double h, const Vec& u0, const Vec& u1, const Vec& g0,
                       const Vec& g1, Vec& out);
std::size_t interval_triplet_count(const SpMat& mass, const SpMat& j0, const SpMat& j1);
void interval_triplets(const SpMat& mass, double h, const SpMat& j0, const SpMat& j1,
                       Eigen::Index row, Eigen::Index col, Triplet* out);
double interval_defect(const RateFunction& rate, double h, const Vec& u0, const Vec& u1,
                       const Vec& f0, const Vec& f1);
}  // namespace detail

}  // namespace sloc::kernels
