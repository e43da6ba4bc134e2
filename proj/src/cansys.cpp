#include "sloc/cansys.hpp"

#include "sloc/objective.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <string>

namespace sloc {

namespace {

SpMat block_diag(const SpMat& a, const SpMat& b) {
  const Eigen::Index n = a.rows();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(a.nonZeros() + b.nonZeros());
  for (Eigen::Index k = 0; k < a.outerSize(); ++k) {
    for (SpMat::InnerIterator it(a, k); it; ++it) trips.emplace_back(it.row(), it.col(), it.value());
  }
  for (Eigen::Index k = 0; k < b.outerSize(); ++k) {
    for (SpMat::InnerIterator it(b, k); it; ++it) trips.emplace_back(it.row() + n, it.col() + n, it.value());
  }
  SpMat out(2 * n, 2 * n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace

CanonicalState flat_state(double P, double q, int n) {
  CanonicalState u(2 * n);
  u.head(n).setConstant(P);
  u.tail(n).setConstant(q);
  return u;
}

CanonicalState reflect(const CanonicalState& u) {
  const Eigen::Index n = u.size() / 2;
  CanonicalState v(u.size());
  v.head(n) = u.head(n).reverse();
  v.tail(n) = u.tail(n).reverse();
  return v;
}

SystemOperators SystemOperators::make(const ModelParams& params, const Mesh1D& mesh) {
  params.validate();
  SystemOperators sys;
  sys.params = params;
  sys.mesh = mesh;
  sys.fem = assemble(mesh);
  const SpMat dk = params.D * sys.fem.stiffness;
  sys.block_k = block_diag(dk, SpMat(-dk));
  sys.block_m = block_diag(sys.fem.mass, sys.fem.mass);
  sys.mass_solver = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(sys.fem.mass);
  return sys;
}

SystemOperators SystemOperators::with_b(double b) const {
  SystemOperators out = *this;
  out.params.b = b;
  out.params.validate();
  return out;
}

void check_admissible(const CanonicalState& u) {
  const auto q = costate_part(u);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!(q[i] < 0.0)) {
      throw DomainError("costate must be negative at every node; node " + std::to_string(i) +
                        " has q = " + std::to_string(q[i]));
    }
  }
}

Vec nonlinearity(const CanonicalState& u, const ModelParams& params) {
  check_admissible(u);
  const Eigen::Index n = u.size() / 2;
  Vec f(u.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double P = u[i], q = u[n + i];
    f[i] = state_rhs(P, -1.0 / q, params);
    f[n + i] = costate_rhs(P, q, params);
  }
  return f;
}

Vec control_of(const CanonicalState& u) {
  check_admissible(u);
  return (-costate_part(u).array().inverse()).matrix();
}

Vec residual(const CanonicalState& u, const SystemOperators& sys) {
  return sys.block_k * u - sys.block_m * nonlinearity(u, sys.params);
}

namespace {

struct NodalBlocks {
  Vec pp, pq, qp, qq;
};

NodalBlocks nodal_blocks(const CanonicalState& u, const ModelParams& p) {
  check_admissible(u);
  const Eigen::Index n = u.size() / 2;
  NodalBlocks d{Vec(n), Vec(n), Vec(n), Vec(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double P = u[i], q = u[n + i];
    d.pp[i] = recycling_d1(P) - p.b;
    d.pq[i] = 1.0 / (q * q);
    d.qp[i] = 2.0 * p.gamma - q * recycling_d2(P);
    d.qq[i] = p.r + p.b - recycling_d1(P);
  }
  return d;
}

}  // namespace

SpMat nonlinearity_jacobian(const CanonicalState& u, const ModelParams& params) {
  const NodalBlocks d = nodal_blocks(u, params);
  const Eigen::Index n = u.size() / 2;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    trips.emplace_back(i, i, d.pp[i]);
    trips.emplace_back(i, n + i, d.pq[i]);
    trips.emplace_back(n + i, i, d.qp[i]);
    trips.emplace_back(n + i, n + i, d.qq[i]);
  }
  SpMat J(2 * n, 2 * n);
  J.setFromTriplets(trips.begin(), trips.end());
  return J;
}

SpMat jacobian(const CanonicalState& u, const SystemOperators& sys) {
  const int n = sys.nodes();
  const NodalBlocks d = nodal_blocks(u, sys.params);
  // -M * diag(...) per block; M is tridiagonal so the pattern stays tridiagonal.
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(4 * sys.fem.mass.nonZeros() + sys.block_k.nonZeros());
  const SpMat& M = sys.fem.mass;
  for (Eigen::Index col = 0; col < M.outerSize(); ++col) {
    for (SpMat::InnerIterator it(M, col); it; ++it) {
      const auto row = it.row();
      const double m = it.value();
      trips.emplace_back(row, col, -m * d.pp[col]);
      trips.emplace_back(row, col + n, -m * d.pq[col]);
      trips.emplace_back(row + n, col, -m * d.qp[col]);
      trips.emplace_back(row + n, col + n, -m * d.qq[col]);
    }
  }
  for (Eigen::Index col = 0; col < sys.block_k.outerSize(); ++col) {
    for (SpMat::InnerIterator it(sys.block_k, col); it; ++it) {
      trips.emplace_back(it.row(), col, it.value());
    }
  }
  SpMat J(2 * n, 2 * n);
  J.setFromTriplets(trips.begin(), trips.end());
  J.makeCompressed();
  return J;
}

Vec residual_db(const CanonicalState& u, const SystemOperators& sys) {
  const int n = sys.nodes();
  Vec dfdb(2 * n);
  dfdb.head(n) = -u.head(n);
  dfdb.tail(n) = u.tail(n);
  return -(sys.block_m * dfdb);
}

Vec mass_solve(const SystemOperators& sys, const Vec& v) {
  return sys.mass_solver->solve(v);
}

Vec block_mass_solve(const SystemOperators& sys, const Vec& v) {
  const int n = sys.nodes();
  Vec out(v.size());
  out.head(n) = sys.mass_solver->solve(v.head(n));
  out.tail(n) = sys.mass_solver->solve(v.tail(n));
  return out;
}

Vec evolution_rate(const CanonicalState& u, const SystemOperators& sys) {
  return -block_mass_solve(sys, residual(u, sys));
}

double averaged_objective(const CanonicalState& u, const SystemOperators& sys) {
  return averaged_current_objective(state_part(u), control_of(u), sys.params, sys.fem);
}

IvpResult forward_ivp(const Vec& P0, const ControlField& control, const SystemOperators& sys,
                      double horizon, double dt, Stepping stepping) {
  if (!(dt > 0.0) || !(horizon > 0.0)) {
    throw std::invalid_argument("forward_ivp: horizon and dt must be positive");
  }
  const int n = sys.nodes();
  if (P0.size() != n) {
    throw std::invalid_argument("forward_ivp: initial state has the wrong length");
  }
  const ModelParams& p = sys.params;
  const SpMat& M = sys.fem.mass;
  const SpMat dK = p.D * sys.fem.stiffness;
  const double theta = stepping == Stepping::trapezoidal ? 0.5 : 1.0;

  auto load = [&](double t) {
    Vec k(n);
    for (int i = 0; i < n; ++i) {
      k[i] = control(sys.mesh.nodes[i], t);
      if (!(k[i] > 0.0)) {
        throw DomainError("forward_ivp: control must be positive, got " + std::to_string(k[i]));
      }
    }
    return k;
  };
  auto source = [&](const Vec& P, const Vec& k) {
    Vec f(n);
    for (int i = 0; i < n; ++i) f[i] = state_rhs(P[i], k[i], p);
    return f;
  };

  const int steps = static_cast<int>(std::ceil(horizon / dt - 1e-12));
  IvpResult out;
  out.times.reserve(steps + 1);
  Vec P = P0;
  Vec k = load(0.0);
  out.times.push_back(0.0);
  out.states.push_back(P);
  out.controls.push_back(k);

  Eigen::SparseLU<SpMat> lu;
  for (int s = 0; s < steps; ++s) {
    const double t0 = out.times.back();
    const double t1 = std::min(horizon, t0 + dt);
    const double h = t1 - t0;
    const Vec k1 = load(t1);
    const Vec explicit_part = M * P / h - (1.0 - theta) * (dK * P - M * source(P, k));
    Vec Pn = P;
    bool converged = false;
    for (int it = 0; it < 30; ++it) {
      const Vec R = M * Pn / h + theta * (dK * Pn - M * source(Pn, k1)) - explicit_part;
      Vec dfdp(n);
      for (int i = 0; i < n; ++i) dfdp[i] = recycling_d1(Pn[i]) - p.b;
      SpMat A = SpMat(M / h) + theta * dK - theta * SpMat(M * dfdp.asDiagonal());
      lu.compute(A);
      if (lu.info() != Eigen::Success) {
        throw std::runtime_error("forward_ivp: singular step matrix");
      }
      const Vec d = lu.solve(-R);
      Pn += d;
      if (d.lpNorm<Eigen::Infinity>() < 1e-13 * (1.0 + Pn.lpNorm<Eigen::Infinity>())) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw std::runtime_error("forward_ivp: Newton failed at t = " + std::to_string(t1));
    }
    P = Pn;
    k = k1;
    out.times.push_back(t1);
    out.states.push_back(P);
    out.controls.push_back(k);
  }

  std::vector<double> jca(out.times.size());
  for (std::size_t j = 0; j < jca.size(); ++j) {
    jca[j] = averaged_current_objective(out.states[j], out.controls[j], p, sys.fem);
  }
  out.objective = discounted_value(out.times, jca, p.r);
  return out;
}

}  // namespace sloc
