#pragma once

// Linear finite elements on (-L, L) with natural (Neumann) boundary
// conditions.

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <vector>

namespace sloc {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

struct Mesh1D {
  double half_length = 0.0;
  std::vector<double> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
  double domain_size() const { return 2.0 * half_length; }
};

/// Uniform mesh with n nodes spanning [-L, L]. Throws for n < 3 or L <= 0.
Mesh1D build_mesh(double half_length, int n);

struct FemOperators {
  SpMat mass;       ///< consistent mass matrix, SPD, tridiagonal
  SpMat stiffness;  ///< discrete -Laplacian with Neumann BC, PSD, tridiagonal
  Vec mass_weights; ///< M * 1, the quadrature weights used for averages
  double domain_size = 0.0;
};

FemOperators assemble(const Mesh1D& mesh);

/// M^{-1} K with entries of magnitude below delta dropped. delta = 0 gives the
/// exact (dense) product.
SpMat lumped_product(const FemOperators& ops, double delta);

/// <v> = (1^T M v) / |Omega|
double average(const Vec& v, const FemOperators& ops);

/// ||v||_2 = sqrt(v^T M v / |Omega|)
double normalized_l2(const Vec& v, const FemOperators& ops);

}  // namespace sloc
