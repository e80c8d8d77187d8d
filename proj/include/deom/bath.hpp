#pragma once

// Reservoir description: Lorentzian spectral density, exact correlation
// functions (adaptive-quadrature oracle and Matsubara-series sampler),
// dissipaton mode table with chemical-potential shifts and CSV round-trip.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "common.hpp"
#include "errors.hpp"
#include "quad.hpp"

namespace deom {

struct LorentzBath {
  double delta = 1.0;   // coupling strength
  double W = 10.0;      // bandwidth
  double beta = 10.0;   // inverse temperature
  double mu = 0.0;      // chemical potential
  std::string alpha_label = "L";
  std::vector<int> coupled_orbitals;

  void validate() const {
    if (!(delta > 0.0) || !(W > 0.0) || !(beta > 0.0))
      throw ConfigError("bath requires delta > 0, W > 0, beta > 0");
  }
};

inline double spectral_density(const LorentzBath& b, double omega) {
  return b.delta * b.W * b.W / (omega * omega + b.W * b.W);
}

inline double fermi(double x) {
  // 1/(1+e^x) without overflow
  if (x > 0.0) {
    const double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

// Exact correlation by adaptive quadrature plus analytic window tails:
//   C^sigma(t) = e^{i sigma mu t} * (1/pi) int J(u) e^{iut} f(beta u) du.
// The window edge Oc keeps the Fermi factor at machine zero outside; the
// remaining pure-Lorentzian tail on the occupied side is added in closed
// form (hard truncation alone leaves O(1%) at small t).
inline cplx reference_correlation(const LorentzBath& b, int sigma, double t) {
  b.validate();
  if (t < 0.0) throw Error("reference_correlation requires t >= 0");
  const double Oc = 40.0 * b.W + 40.0 / b.beta;
  auto f = [&](double u) {
    return spectral_density(b, u) * std::exp(cplx(0.0, u * t)) *
           fermi(b.beta * u);
  };
  const int panels = std::max(16, int(Oc * t / 3.0) + 1);
  auto r = integrate(f, -Oc, Oc, 1e-11 * b.delta * b.W, panels);
  const cplx tail = b.delta * lorentz_tail(t, b.W, Oc);
  const cplx eq = (r.value + tail) / PI;
  return std::exp(cplx(0.0, sigma * b.mu * t)) * eq;
}

// Fast exact sampler: residue series over fermionic Matsubara frequencies,
//   C_eq(t) = Delta W f(i beta W) e^{-W t} - (2i/beta) sum_m J(i nu_m) e^{-nu_m t},
//   nu_m = (2m+1) pi / beta,  f(i beta W) = 1/2 - (i/2) tan(beta W / 2).
// Valid for t > 0; C_eq(0) = Delta W / 2 exactly (odd part integrates out).
inline cplx matsubara_correlation(const LorentzBath& b, int sigma, double t) {
  b.validate();
  if (t < 0.0) throw Error("matsubara_correlation requires t >= 0");
  const cplx shift = std::exp(cplx(0.0, sigma * b.mu * t));
  if (t == 0.0) return shift * (0.5 * b.delta * b.W);

  const double x = b.beta * b.W / PI;  // pole collision when x is an odd integer
  const double nearest_odd = 2.0 * std::floor((x - 1.0) / 2.0 + 0.5) + 1.0;
  if (std::abs(x - nearest_odd) < 1e-8)
    throw SingularityError(
        "beta*W coincides with a Matsubara frequency; perturb W");

  const double nu1 = PI / b.beta;
  // include terms until exp(-nu_m t) is negligible against the t=0 scale
  const int M = std::min(2'000'000, int(std::ceil(40.0 / (nu1 * t))) + 2);
  double acc = 0.0;
  for (int m = M - 1; m >= 0; --m) {  // smallest terms first
    const double nu = (2 * m + 1) * nu1;
    const double jv = b.delta * b.W * b.W / (b.W * b.W - nu * nu);
    acc += jv * std::exp(-nu * t);
  }
  const cplx fiW(0.5, -0.5 * std::tan(0.5 * b.beta * b.W));
  cplx eq = b.delta * b.W * fiW * std::exp(-b.W * t);
  eq += cplx(0.0, -2.0 / b.beta) * acc;
  return shift * eq;
}

struct DissipatonMode {
  int alpha = 0;   // reservoir index
  int u = 0;       // system orbital the reservoir couples to
  int sigma = +1;  // +1: creation-type channel, -1: annihilation-type
  int k = 0;       // series index within the channel
  cplx eta{};      // amplitude
  cplx gamma{};    // decay rate, Re gamma > 0
};

// Global mode table. Rows are sorted lexicographically by
// (alpha, u, sigma, k) with sigma = -1 before +1; this flattening defines
// the global hierarchy mode index. Every mode must have a conjugate
// partner (same alpha, u, k; opposite sigma) — the hierarchy couples the
// two within each tier transition.
struct ModeTable {
  std::vector<DissipatonMode> modes;
  std::vector<int> conj;  // index of the conjugate partner of each mode
  int K_per_channel = 0;

  int size() const { return int(modes.size()); }
  int conjugate(int j) const { return conj[std::size_t(j)]; }

  void finalize() {
    std::sort(modes.begin(), modes.end(), [](const DissipatonMode& a,
                                             const DissipatonMode& b) {
      return std::tie(a.alpha, a.u, a.sigma, a.k) <
             std::tie(b.alpha, b.u, b.sigma, b.k);
    });
    conj.assign(modes.size(), -1);
    for (std::size_t j = 0; j < modes.size(); ++j) {
      for (std::size_t i = 0; i < modes.size(); ++i) {
        const auto& m = modes[j];
        const auto& c = modes[i];
        if (c.alpha == m.alpha && c.u == m.u && c.k == m.k &&
            c.sigma == -m.sigma) {
          conj[j] = int(i);
          break;
        }
      }
    }
    K_per_channel = 0;
    for (const auto& m : modes) K_per_channel = std::max(K_per_channel, m.k + 1);
    check();
  }

  void check() const {
    if (conj.size() != modes.size())
      throw ShapeError("mode table not finalized");
    for (std::size_t j = 0; j < modes.size(); ++j) {
      if (!(modes[j].gamma.real() > 0.0))
        throw Error("mode table contains a non-decaying mode (Re gamma <= 0)");
      if (conj[j] < 0 || conj[std::size_t(conj[j])] != int(j))
        throw ShapeError("mode table is not conjugate-paired");
      // The hierarchy weighs mode j's tier-down right product with the
      // conjugated amplitude of its partner while damping with gamma_j;
      // that is only the backward correlation of an actual reservoir when
      // the partner's rate is conj(gamma_j).
      const cplx g = modes[j].gamma;
      const cplx gc = modes[std::size_t(conj[j])].gamma;
      if (std::abs(gc - std::conj(g)) > 1e-6 * (1.0 + std::abs(g)))
        throw Error(
            "mode table channels are not mutually conjugate: mode " +
            std::to_string(j) + " has gamma inconsistent with its partner");
    }
  }
};

inline void shift_modes(std::vector<DissipatonMode>& modes, double mu) {
  for (auto& m : modes) m.gamma -= cplx(0.0, m.sigma * mu);
}

inline void save_mode_table(const ModeTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "alpha,u,sigma,k,re_eta,im_eta,re_gamma,im_gamma\n";
  char line[256];
  for (const auto& m : t.modes) {
    std::snprintf(line, sizeof line,
                  "%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", m.alpha, m.u,
                  m.sigma, m.k, m.eta.real(), m.eta.imag(), m.gamma.real(),
                  m.gamma.imag());
    out << line;
  }
}

inline ModeTable load_mode_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty mode table file " + path);
  ModeTable t;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    DissipatonMode m;
    double re, ie, rg, ig;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    if (!(ss >> m.alpha >> m.u >> m.sigma >> m.k >> re >> ie >> rg >> ig))
      throw ConfigError("bad mode table row in " + path, lineno);
    m.eta = cplx(re, ie);
    m.gamma = cplx(rg, ig);
    t.modes.push_back(m);
  }
  t.finalize();
  return t;
}

}  // namespace deom
