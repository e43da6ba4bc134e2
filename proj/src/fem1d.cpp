#include "sloc/fem1d.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace sloc {

Mesh1D build_mesh(double half_length, int n) {
  if (n < 3) {
    throw std::invalid_argument("build_mesh: need at least 3 nodes");
  }
  if (!(half_length > 0.0)) {
    throw std::invalid_argument("build_mesh: half length must be positive");
  }
  Mesh1D mesh;
  mesh.half_length = half_length;
  mesh.nodes.resize(n);
  const double h = 2.0 * half_length / (n - 1);
  for (int i = 0; i < n; ++i) {
    mesh.nodes[i] = -half_length + h * i;
  }
  mesh.nodes.back() = half_length;
  return mesh;
}

FemOperators assemble(const Mesh1D& mesh) {
  const int n = mesh.size();
  std::vector<Eigen::Triplet<double>> mt, kt;
  mt.reserve(4 * (n - 1));
  kt.reserve(4 * (n - 1));
  for (int e = 0; e + 1 < n; ++e) {
    const double h = mesh.nodes[e + 1] - mesh.nodes[e];
    if (!(h > 0.0)) {
      throw std::invalid_argument("assemble: mesh nodes must be strictly increasing");
    }
    const int i = e, j = e + 1;
    mt.emplace_back(i, i, h / 3.0);
    mt.emplace_back(j, j, h / 3.0);
    mt.emplace_back(i, j, h / 6.0);
    mt.emplace_back(j, i, h / 6.0);
    kt.emplace_back(i, i, 1.0 / h);
    kt.emplace_back(j, j, 1.0 / h);
    kt.emplace_back(i, j, -1.0 / h);
    kt.emplace_back(j, i, -1.0 / h);
  }
  FemOperators ops;
  ops.mass.resize(n, n);
  ops.stiffness.resize(n, n);
  ops.mass.setFromTriplets(mt.begin(), mt.end());
  ops.stiffness.setFromTriplets(kt.begin(), kt.end());
  ops.mass.makeCompressed();
  ops.stiffness.makeCompressed();
  ops.mass_weights = ops.mass * Vec::Ones(n);
  ops.domain_size = mesh.domain_size();
  return ops;
}

SpMat lumped_product(const FemOperators& ops, double delta) {
  if (!(delta >= 0.0)) {
    throw std::invalid_argument("lumped_product: delta must be non-negative");
  }
  const int n = static_cast<int>(ops.mass.rows());
  Eigen::SimplicialLDLT<SpMat> mass_solver(ops.mass);
  const Eigen::MatrixXd product = mass_solver.solve(Eigen::MatrixXd(ops.stiffness));
  std::vector<Eigen::Triplet<double>> trips;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double v = product(i, j);
      if (std::abs(v) >= delta && v != 0.0) {
        trips.emplace_back(i, j, v);
      }
    }
  }
  SpMat out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

double average(const Vec& v, const FemOperators& ops) {
  return ops.mass_weights.dot(v) / ops.domain_size;
}

double normalized_l2(const Vec& v, const FemOperators& ops) {
  return std::sqrt(v.dot(ops.mass * v) / ops.domain_size);
}

}  // namespace sloc
