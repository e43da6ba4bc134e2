#include "sloc/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace sloc {

namespace {

// Weights of the left and right hat functions for the integral of
// e^{-r s} over [0, h], scaled by r^2 h. With x = r h:
//   left  = x - 1 + e^{-x}
//   right = 1 - e^{-x} (1 + x)
// Short series below x = 0.1 avoid the cancellation.
void hat_weights(double x, double& left, double& right) {
  if (x < 0.1) {
    left = 0.0;
    right = 0.0;
    double term = 1.0;  // x^k / k!
    for (int k = 1; k <= 14; ++k) {
      term *= x / k;
      if (k < 2) continue;
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      left += sign * term;
      right += sign * term * (k - 1);
    }
    return;
  }
  const double e = std::exp(-x);
  left = x - 1.0 + e;
  right = 1.0 - e * (1.0 + x);
}

}  // namespace

double averaged_current_objective(const Vec& P, const Vec& k, const ModelParams& params,
                                  const FemOperators& fem) {
  Vec local(P.size());
  for (Eigen::Index i = 0; i < P.size(); ++i) {
    local[i] = current_objective(P[i], k[i], params);
  }
  return average(local, fem);
}

double discounted_value(std::span<const double> times, std::span<const double> jca, double r) {
  if (times.size() != jca.size() || times.empty()) {
    throw std::invalid_argument("discounted_value: need matching, non-empty time and value lists");
  }
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    const double h = times[j + 1] - times[j];
    double wl = 0.0, wr = 0.0;
    hat_weights(r * h, wl, wr);
    const double scale = std::exp(-r * times[j]) / (r * r * h);
    total += scale * (wl * jca[j] + wr * jca[j + 1]);
  }
  total += std::exp(-r * times.back()) / r * jca.back();
  return total;
}

}  // namespace sloc
