#pragma once

// Pointwise shallow-lake dynamics: state and costate right-hand sides,
// the current-value objective, the local Hamiltonian and the interior
// maximizer of the Hamiltonian in the control.

#include <cmath>
#include <stdexcept>
#include <string>

namespace sloc {

/// Raised when an argument leaves the domain where the canonical system is
/// defined (non-positive load, non-negative costate, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when an iterative solver gives up. Carries the last residual norm.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual = 0.0)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct ModelParams {
  double r = 0.03;      ///< discount rate
  double gamma = 0.5;   ///< pollution cost weight
  double b = 0.65;      ///< phosphorus degradation rate
  double D = 0.5;       ///< diffusion coefficient

  void validate() const {
    if (!(r > 0.0) || !(gamma > 0.0) || !(b > 0.0) || !(D >= 0.0)) {
      throw std::invalid_argument("model parameters need r, gamma, b > 0 and D >= 0");
    }
  }
};

// Recycling nonlinearity g(P) = P^2/(1+P^2) and its first two derivatives.
inline double recycling(double P) {
  const double p2 = P * P;
  return p2 / (1.0 + p2);
}

inline double recycling_d1(double P) {
  const double s = 1.0 + P * P;
  return 2.0 * P / (s * s);
}

inline double recycling_d2(double P) {
  const double p2 = P * P;
  const double s = 1.0 + p2;
  return (2.0 - 6.0 * p2) / (s * s * s);
}

/// J_c(P, k) = ln k - gamma P^2.
inline double current_objective(double P, double k, const ModelParams& params) {
  if (!(k > 0.0)) {
    throw DomainError("current_objective: load k must be positive, got " + std::to_string(k));
  }
  return std::log(k) - params.gamma * P * P;
}

/// k* = -1/q, the maximizer of the Hamiltonian; only defined for q < 0.
inline double optimal_control(double q) {
  if (!(q < 0.0)) {
    throw DomainError("optimal_control: costate must be negative, got " + std::to_string(q));
  }
  return -1.0 / q;
}

inline double state_rhs(double P, double k, const ModelParams& params) {
  return k - params.b * P + recycling(P);
}

inline double costate_rhs(double P, double q, const ModelParams& params) {
  return 2.0 * params.gamma * P + q * (params.r + params.b - recycling_d1(P));
}

inline double hamiltonian(double P, double q, double k, const ModelParams& params) {
  return current_objective(P, k, params) + q * state_rhs(P, k, params);
}

}  // namespace sloc
