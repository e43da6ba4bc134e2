#pragma once

#include "sloc/fem1d.hpp"
#include "sloc/model.hpp"

#include <span>

namespace sloc {

/// Spatially averaged current value J_ca = <ln k - gamma P^2>.
double averaged_current_objective(const Vec& P, const Vec& k, const ModelParams& params,
                                  const FemOperators& fem);

/// Trapezoidal quadrature of e^{-rt} J_ca(t) over the given times plus the
/// salvage term e^{-rT} J_ca(T) / r. For a constant J_ca the result is
/// J_ca / r up to quadrature error of the exponential.
double discounted_value(std::span<const double> times, std::span<const double> jca, double r);

}  // namespace sloc
