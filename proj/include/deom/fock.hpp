#pragma once

// Impurity Fock space: Jordan-Wigner fermion operators on up to 8
// spin-orbitals, plus the dot Hamiltonians built from them.

#include <cstdint>
#include <vector>

#include "common.hpp"
#include "errors.hpp"

namespace deom {

// Annihilation/creation operators with exact anticommutation relations.
// Basis state index encodes occupations bitwise: bit u set = orbital u
// occupied. Global orbital order is site-major then spin:
// (1up, 1dn, 2up, 2dn, ...).
struct FockOperatorSet {
  int n_orbitals = 0;
  int dim = 0;
  std::vector<Mat> annihilators;  // a_u, one per orbital

  Mat creator(int u) const { return annihilators.at(u).adjoint(); }
  Mat number(int u) const { return creator(u) * annihilators.at(u); }
  Mat total_number() const {
    Mat n = Mat::Zero(dim, dim);
    for (int u = 0; u < n_orbitals; ++u) n += number(u);
    return n;
  }
};

inline FockOperatorSet build_fock_operators(int n_orbitals) {
  if (n_orbitals < 1 || n_orbitals > 8)
    throw ShapeError("n_orbitals must be in [1, 8], got " + std::to_string(n_orbitals));
  FockOperatorSet ops;
  ops.n_orbitals = n_orbitals;
  ops.dim = 1 << n_orbitals;
  ops.annihilators.reserve(n_orbitals);
  for (int u = 0; u < n_orbitals; ++u) {
    Mat a = Mat::Zero(ops.dim, ops.dim);
    for (int s = 0; s < ops.dim; ++s) {
      if (!(s >> u & 1)) continue;
      // Jordan-Wigner string: one sign flip per occupied orbital below u.
      const int below = s & ((1 << u) - 1);
      const double sign = (__builtin_popcount(below) & 1) ? -1.0 : 1.0;
      a(s ^ (1 << u), s) = sign;
    }
    ops.annihilators.push_back(std::move(a));
  }
  return ops;
}

// Double-quantum-dot parameters. Energies are multiples of the coupling
// unit; N is the integer filling offset of the epsilon scheme.
struct DqdParameters {
  double eps1 = 0.0, eps2 = 0.0;
  double U = 0.0;    // intra-site Coulomb
  double U_C = 0.0;  // inter-site Coulomb
  double T_C = 0.0;  // inter-dot hopping
  int N = 0;
};

inline double epsilon_from_scheme(double U, double U_C, int N) {
  return -(U + 2.0 * N * U_C) / 2.0;
}

// H = sum_i eps_i n_i + U sum_i n_iup n_idn + U_C n_1 n_2
//     + T_C sum_s (a1s^+ a2s + a2s^+ a1s), on orbitals (1up,1dn,2up,2dn).
inline Mat build_dqd_hamiltonian(const DqdParameters& p, const FockOperatorSet& ops) {
  if (ops.n_orbitals != 4)
    throw ShapeError("double-dot Hamiltonian needs 4 orbitals, got " +
                     std::to_string(ops.n_orbitals));
  const Mat n1u = ops.number(0), n1d = ops.number(1);
  const Mat n2u = ops.number(2), n2d = ops.number(3);
  Mat H = p.eps1 * (n1u + n1d) + p.eps2 * (n2u + n2d);
  H += p.U * (n1u * n1d + n2u * n2d);
  H += p.U_C * ((n1u + n1d) * (n2u + n2d));
  for (int s = 0; s < 2; ++s) {
    H += p.T_C * (ops.creator(0 + s) * ops.annihilators[2 + s] +
                  ops.creator(2 + s) * ops.annihilators[0 + s]);
  }
  return H;
}

// Single dot with spin: H = eps (n_up + n_dn) + U n_up n_dn, orbitals (up,dn).
inline Mat build_single_dot_hamiltonian(double eps, double U, const FockOperatorSet& ops) {
  if (ops.n_orbitals != 2)
    throw ShapeError("single-dot Hamiltonian needs 2 orbitals, got " +
                     std::to_string(ops.n_orbitals));
  const Mat nu = ops.number(0), nd = ops.number(1);
  return eps * (nu + nd) + U * (nu * nd);
}

}  // namespace deom
