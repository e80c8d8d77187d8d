#pragma once

// Exponential decomposition of reservoir correlation functions.
// Two backends:
//  (a) "pole": the Lorentzian resolvent pole plus a Padé-type rational
//      approximation of the Fermi function (poles/residues from the
//      eigenvalues of two symmetric tridiagonal matrices);
//  (b) "prony": ESPRIT on a uniform time grid (Hankel SVD, shift
//      invariance, Vandermonde least squares).
// Both must reproduce the sampled correlation within the requested
// relative sup-tolerance, else a FitError carries the achieved error.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bath.hpp"
#include "common.hpp"
#include "errors.hpp"

namespace deom {

enum class FitBackend { Auto, Pole, Prony };

inline FitBackend parse_backend(const std::string& s) {
  if (s == "auto") return FitBackend::Auto;
  if (s == "pole") return FitBackend::Pole;
  if (s == "prony") return FitBackend::Prony;
  throw ConfigError("unknown fit backend '" + s + "' (auto|pole|prony)");
}

struct ExpMode {
  cplx eta, gamma;
};

namespace detail {

// Padé [N-1/N] approximation of the Fermi function:
//   1/(1+e^x) ~= 1/2 - sum_m 2 kappa_m x / (x^2 + xi_m^2).
// Poles xi_m: positive eigenvalues lambda of the 2N tridiagonal with
// off-diagonal 1/sqrt((2m-1)(2m+1)) give xi = 2/lambda; zeros zeta_j the
// same with off-diagonal 1/sqrt((2m+1)(2m+3)) at size 2N-1. Residues by
// the ratio of products, accumulated in log space to avoid overflow.
inline void pade_fermi(int N, std::vector<double>& xi,
                       std::vector<double>& kappa) {
  xi.clear();
  kappa.clear();
  if (N <= 0) return;
  auto positive_inverses = [](int size, int first_odd) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(size, size);
    for (int m = 1; m < size; ++m) {
      const double b = 1.0 / std::sqrt(double(first_odd + 2 * (m - 1)) *
                                       double(first_odd + 2 * m));
      A(m - 1, m) = A(m, m - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    std::vector<double> out;
    for (int i = 0; i < size; ++i)
      if (es.eigenvalues()[i] > 1e-14) out.push_back(2.0 / es.eigenvalues()[i]);
    std::sort(out.begin(), out.end());
    return out;
  };
  xi = positive_inverses(2 * N, 1);
  const std::vector<double> zeta =
      N > 1 ? positive_inverses(2 * N - 1, 3) : std::vector<double>{};
  kappa.resize(N);
  for (int j = 0; j < N; ++j) {
    double lg = 0.0, sg = 1.0;
    for (double z : zeta) {
      const double d = z * z - xi[j] * xi[j];
      lg += std::log(std::abs(d));
      sg *= (d < 0 ? -1.0 : 1.0);
    }
    for (int i = 0; i < N; ++i) {
      if (i == j) continue;
      const double d = xi[i] * xi[i] - xi[j] * xi[j];
      lg -= std::log(std::abs(d));
      sg *= (d < 0 ? -1.0 : 1.0);
    }
    kappa[j] = 0.5 * N * (2.0 * N + 1.0) * sg * std::exp(lg);
  }
}

}  // namespace detail

// Equilibrium pole-expansion modes: the Lorentzian pole at gamma = W plus
// K-1 Padé poles of the Fermi factor.
inline std::vector<ExpMode> pole_modes(const LorentzBath& b, int K) {
  if (K < 1) throw ConfigError("pole decomposition requires K >= 1");
  const double x = b.beta * b.W / PI;
  const double nearest_odd = 2.0 * std::floor((x - 1.0) / 2.0 + 0.5) + 1.0;
  if (std::abs(x - nearest_odd) < 1e-8)
    throw SingularityError(
        "beta*W coincides with a Matsubara frequency; perturb W");
  std::vector<ExpMode> modes;
  const cplx fiW(0.5, -0.5 * std::tan(0.5 * b.beta * b.W));
  modes.push_back({b.delta * b.W * fiW, cplx(b.W, 0.0)});
  std::vector<double> xi, kappa;
  detail::pade_fermi(K - 1, xi, kappa);
  for (int j = 0; j < K - 1; ++j) {
    const double g = xi[j] / b.beta;
    const cplx eta = cplx(0.0, -2.0 / b.beta) * kappa[j] * b.delta * b.W *
                     b.W / (b.W * b.W - g * g);
    modes.push_back({eta, cplx(g, 0.0)});
  }
  return modes;
}

// Uniform sampling grid for fitting: t_max covers the slower of the
// bandwidth and thermal decay scales.
struct FitGrid {
  std::vector<double> t;
  std::vector<cplx> c;  // equilibrium correlation samples
  double dt = 0.0;
};

inline FitGrid sample_correlation(const LorentzBath& b, int points = 2000) {
  FitGrid g;
  const double t_max = 10.0 / std::min(b.W, PI / b.beta);
  g.t.resize(points);
  g.c.resize(points);
  g.dt = t_max / (points - 1);
  LorentzBath eq = b;
  eq.mu = 0.0;
  for (int i = 0; i < points; ++i) {
    g.t[i] = i * g.dt;
    g.c[i] = matsubara_correlation(eq, +1, g.t[i]);
  }
  return g;
}

inline double reconstruction_error(const std::vector<ExpMode>& modes,
                                   const FitGrid& g) {
  double norm = 0.0, err = 0.0;
  for (std::size_t i = 0; i < g.t.size(); ++i)
    norm = std::max(norm, std::abs(g.c[i]));
  for (std::size_t i = 0; i < g.t.size(); ++i) {
    cplx r = 0.0;
    for (const auto& m : modes) r += m.eta * std::exp(-m.gamma * g.t[i]);
    err = std::max(err, std::abs(r - g.c[i]));
  }
  return err / norm;
}

// ESPRIT: estimate K decay rates from sliding-window Hankel matrices,
// then amplitudes by least squares. The signal subspace is built jointly
// from the samples and their conjugates, so the exponent set serves both
// conjugate reservoir channels at the same K: the true exponents of C and
// conj(C) are one conjugation-symmetric (here real) set, and the joint
// estimate lands on it instead of drifting into unpaired complex rates
// that the closure below would have to extend. Modes with non-decaying
// rates (|z| >= 1) are discarded; on clean data they carry no weight.
inline std::vector<ExpMode> prony_modes(const FitGrid& g, int K,
                                        int pencil = 60) {
  const int n = int(g.c.size());
  if (K < 1 || K >= pencil || pencil >= n)
    throw ConfigError("prony decomposition needs 1 <= K < pencil < samples");
  const int rows = n - pencil + 1;
  Mat H(2 * rows, pencil);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < pencil; ++j) {
      H(i, j) = g.c[std::size_t(i + j)];
      H(rows + i, j) = std::conj(g.c[std::size_t(i + j)]);
    }
  Eigen::BDCSVD<Mat> svd(H, Eigen::ComputeThinU);
  const Mat Uk = svd.matrixU().leftCols(K);
  // shift invariance holds within each stacked block separately
  Mat head(2 * (rows - 1), K), tail(2 * (rows - 1), K);
  head << Uk.topRows(rows - 1), Uk.middleRows(rows, rows - 1);
  tail << Uk.middleRows(1, rows - 1), Uk.bottomRows(rows - 1);
  const Mat shift = head.colPivHouseholderQr().solve(tail);
  Eigen::ComplexEigenSolver<Mat> es(shift);
  if (es.info() != Eigen::Success)
    throw FitError(1.0, 0.0, K);
  std::vector<cplx> gammas;
  for (int k = 0; k < K; ++k) {
    const cplx z = es.eigenvalues()[k];
    if (std::abs(z) >= 1.0 || std::abs(z) < 1e-300) continue;
    gammas.push_back(-std::log(z) / g.dt);
  }
  if (gammas.empty()) throw FitError(1.0, 0.0, K);
  Mat V(n, int(gammas.size()));
  for (int i = 0; i < n; ++i)
    for (std::size_t k = 0; k < gammas.size(); ++k)
      V(i, int(k)) = std::exp(-gammas[k] * g.t[std::size_t(i)]);
  Vec rhs(n);
  for (int i = 0; i < n; ++i) rhs(i) = g.c[std::size_t(i)];
  const Vec amp = V.colPivHouseholderQr().solve(rhs);
  std::vector<ExpMode> modes;
  for (std::size_t k = 0; k < gammas.size(); ++k)
    modes.push_back({amp(int(k)), gammas[k]});
  return modes;
}

struct FitOptions {
  int K = 0;           // 0: choose the smallest K meeting tol
  double tol = 0.02;   // relative sup-error target on the sample grid
  FitBackend backend = FitBackend::Auto;
};

namespace detail {

// A decomposition whose exponent set is closed under complex conjugation,
// with pair[k] the index of the mode whose exponent is conj(gamma_k).
// The two conjugate channels of a reservoir must run over mutually
// conjugated exponents: the hierarchy couples mode j's decay rate to the
// conjugated amplitude of its partner, so an unclosed set would describe
// inconsistent forward/backward correlations. Pole expansions have real
// exponents and the joint ESPRIT lands on (near-)real or conjugate-paired
// sets, so closure normally just snaps stray imaginary parts and records
// the pairing; if an unpaired complex exponent does appear, its conjugate
// is appended and all amplitudes are re-fit on the sample grid.
struct ClosedModes {
  std::vector<ExpMode> modes;
  std::vector<int> pair;
};

inline ClosedModes conjugate_close(std::vector<ExpMode> in, const FitGrid& g) {
  for (auto& m : in)
    if (std::abs(m.gamma.imag()) <= 1e-10 * (1.0 + std::abs(m.gamma.real())))
      m.gamma = cplx(m.gamma.real(), 0.0);
  std::vector<int> pair(in.size(), -1);
  bool grew = false;
  for (std::size_t k = 0; k < in.size(); ++k) {
    if (pair[k] >= 0) continue;
    if (in[k].gamma.imag() == 0.0) {
      pair[k] = int(k);
      continue;
    }
    std::size_t found = k;
    for (std::size_t j = k + 1; j < in.size(); ++j)
      if (pair[j] < 0 && std::abs(in[j].gamma - std::conj(in[k].gamma)) <=
                             1e-8 * (1.0 + std::abs(in[k].gamma))) {
        found = j;
        break;
      }
    if (found != k) {
      pair[k] = int(found);
      pair[found] = int(k);
    } else {
      in.push_back({cplx(0.0, 0.0), std::conj(in[k].gamma)});
      pair.push_back(int(k));
      pair[k] = int(in.size()) - 1;
      grew = true;
    }
  }
  if (grew) {
    const int n = int(g.t.size()), K = int(in.size());
    Mat V(n, K);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < K; ++k)
        V(i, k) = std::exp(-in[std::size_t(k)].gamma * g.t[std::size_t(i)]);
    Vec rhs(n);
    for (int i = 0; i < n; ++i) rhs(i) = g.c[std::size_t(i)];
    const Vec amp = V.colPivHouseholderQr().solve(rhs);
    for (int k = 0; k < K; ++k) in[std::size_t(k)].eta = amp(k);
  }
  return {std::move(in), std::move(pair)};
}

}  // namespace detail

namespace detail {

// Fit the equilibrium correlation of one reservoir and close the exponent
// set under conjugation. Both conjugate channels are views of this one
// result, so the tolerance gate runs on the closed set, inside the
// K-search loop: closing can shift the sup error, and a larger K may
// recover what a smaller closed set loses.
inline ClosedModes fit_equilibrium(const LorentzBath& eq,
                                   const FitOptions& opt) {
  if (opt.K < 0 || (opt.K == 0 && !(opt.tol > 0.0 && opt.tol <= 0.1)))
    throw ConfigError("decomposition needs K >= 1 or tol in (0, 0.1]");
  const FitGrid grid = sample_correlation(eq);

  auto attempt = [&](int K, double& err) -> ClosedModes {
    ClosedModes best;
    err = 1e300;
    auto consider = [&](std::vector<ExpMode> m) {
      ClosedModes c = conjugate_close(std::move(m), grid);
      const double e = reconstruction_error(c.modes, grid);
      if (e < err) {
        err = e;
        best = std::move(c);
      }
    };
    if (opt.backend != FitBackend::Prony) {
      try {
        consider(pole_modes(eq, K));
      } catch (const SingularityError&) {
        if (opt.backend == FitBackend::Pole) throw;
      }
    }
    if (opt.backend != FitBackend::Pole && err > opt.tol) {
      try {
        consider(prony_modes(grid, K));
      } catch (const FitError&) {
        // degenerate pencil at this K; a different K may still work
      }
    }
    return best;
  };

  ClosedModes closed;
  double err = 1e300;
  if (opt.K >= 1) {
    closed = attempt(opt.K, err);
  } else {
    for (int K = 1; K <= 24; ++K) {
      closed = attempt(K, err);
      if (err <= opt.tol) break;
    }
  }
  if (err > opt.tol) throw FitError(err, opt.tol, opt.K);
  return closed;
}

}  // namespace detail

// Decompose the correlation function of one reservoir channel into
// exponentials. The fit runs on the equilibrium correlation; the sigma=+1
// channel runs over the conjugated exponent set, and the
// chemical-potential shift gamma -> gamma - i sigma mu is applied to the
// result (exactly equivalent to fitting the shifted integrand).
inline std::vector<ExpMode> decompose_correlation(const LorentzBath& b,
                                                  int sigma,
                                                  const FitOptions& opt) {
  b.validate();
  LorentzBath eq = b;
  eq.mu = 0.0;
  const detail::ClosedModes closed = detail::fit_equilibrium(eq, opt);
  std::vector<ExpMode> modes(closed.modes.size());
  for (std::size_t k = 0; k < closed.modes.size(); ++k)
    modes[k] = sigma > 0 ? closed.modes[std::size_t(closed.pair[k])]
                         : closed.modes[k];
  if (sigma != 0 && b.mu != 0.0)
    for (auto& m : modes) m.gamma -= cplx(0.0, sigma * b.mu);
  return modes;
}

// Assemble the global mode table for a set of reservoirs: one channel per
// (reservoir, coupled orbital, sigma), all channels fit with the same
// options. The equilibrium fit is shared between the two conjugate
// channels of a reservoir; only the mu-shift differs.
inline ModeTable build_mode_table(const std::vector<LorentzBath>& baths,
                                  const FitOptions& opt) {
  ModeTable table;
  for (std::size_t a = 0; a < baths.size(); ++a) {
    const LorentzBath& b = baths[a];
    b.validate();
    if (b.coupled_orbitals.empty())
      throw ConfigError("reservoir '" + b.alpha_label +
                        "' couples to no orbital");
    LorentzBath eq = b;
    eq.mu = 0.0;
    const detail::ClosedModes base = detail::fit_equilibrium(eq, opt);
    for (int u : b.coupled_orbitals)
      for (int sigma : {-1, +1})
        for (std::size_t k = 0; k < base.modes.size(); ++k) {
          const ExpMode& src =
              sigma > 0 ? base.modes[std::size_t(base.pair[k])]
                        : base.modes[k];
          DissipatonMode m;
          m.alpha = int(a);
          m.u = u;
          m.sigma = sigma;
          m.k = int(k);
          m.eta = src.eta;
          m.gamma = src.gamma - cplx(0.0, sigma * b.mu);
          table.modes.push_back(m);
        }
  }
  table.finalize();
  return table;
}

}  // namespace deom
