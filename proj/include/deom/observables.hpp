#pragma once

// Observables assembled from converged hierarchy states: correlation
// seeds, impurity spectral functions, steady transport currents,
// current-noise spectra, and the composite-detector total noise.
//
// Correlation functions are one-sided transforms
//   C_AB(w) = (1/pi) Int_0^inf dt e^{iwt} Tr[A e^{Gt}(B rho)],
// evaluated through frequency-domain solves (-G - iw) X = B rho.  In the
// pinned gauge both left and right seeds are plain blockwise products;
// the generator links carry all fermionic-parity bookkeeping.  Current
// insertions are derived from the generator itself (no independent sign
// choices): I_alpha = i[H_coupling^alpha, N_sys] turns the lead-filtered
// generator links into tier-shifting superoperators whose root trace is
// the transport current.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "errors.hpp"
#include "hierarchy.hpp"
#include "solvers.hpp"

namespace deom {

// ---------------------------------------------------------------------
// Spectrum container + CSV round trip
// ---------------------------------------------------------------------

enum class SpectrumKind { ImpurityA, NoiseS, NoiseDerivative };

inline const char* to_string(SpectrumKind k) {
  switch (k) {
    case SpectrumKind::ImpurityA: return "impurity_A";
    case SpectrumKind::NoiseS: return "noise_S";
    case SpectrumKind::NoiseDerivative: return "noise_dSdw";
  }
  return "?";
}

inline SpectrumKind spectrum_kind_from(const std::string& s) {
  if (s == "impurity_A") return SpectrumKind::ImpurityA;
  if (s == "noise_S") return SpectrumKind::NoiseS;
  if (s == "noise_dSdw") return SpectrumKind::NoiseDerivative;
  throw ConfigError("unknown spectrum kind '" + s + "'");
}

struct SpectrumTable {
  std::vector<double> omegas;
  std::vector<double> values;
  std::vector<double> values_imag;  // optional; empty when the table is real
  SpectrumKind kind = SpectrumKind::ImpurityA;
  std::string labels;

  void validate() const {
    if (omegas.size() != values.size())
      throw ShapeError("spectrum table: grid and values differ in length");
    if (!values_imag.empty() && values_imag.size() != values.size())
      throw ShapeError("spectrum table: imaginary column length mismatch");
    for (std::size_t i = 0; i + 1 < omegas.size(); ++i)
      if (!(omegas[i] < omegas[i + 1]))
        throw ShapeError("spectrum table: grid must be strictly increasing");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(omegas[i]) || !std::isfinite(values[i]) ||
          (!values_imag.empty() && !std::isfinite(values_imag[i])))
        throw ShapeError("spectrum table: non-finite entry at row " +
                         std::to_string(i));
    }
  }
};

inline void save_spectrum(const std::string& path, const SpectrumTable& t,
                          const std::string& params = "") {
  t.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "# kind=" << to_string(t.kind) << ", labels=" << t.labels
      << ", params=" << params << "\n";
  char buf[96];
  for (std::size_t i = 0; i < t.omegas.size(); ++i) {
    if (t.values_imag.empty())
      std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", t.omegas[i],
                    t.values[i]);
    else
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t.omegas[i],
                    t.values[i], t.values_imag[i]);
    out << buf;
  }
  if (!out) throw Error("short write to " + path);
}

inline SpectrumTable load_spectrum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  SpectrumTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      // "# kind=..., labels=..., params=..."; labels may contain commas,
      // so they are delimited by the ", params=" marker instead
      const auto kpos = line.find("kind=");
      if (kpos != std::string::npos) {
        const auto start = kpos + 5;
        const auto end = line.find(',', start);
        t.kind = spectrum_kind_from(line.substr(
            start, end == std::string::npos ? end : end - start));
      }
      const auto lpos = line.find("labels=");
      if (lpos != std::string::npos) {
        const auto start = lpos + 7;
        const auto end = line.find(", params=", start);
        t.labels = line.substr(
            start, end == std::string::npos ? end : end - start);
      }
      continue;
    }
    std::string row = line;
    std::replace(row.begin(), row.end(), ',', ' ');
    std::istringstream ss(row);
    double w, v, vi;
    if (!(ss >> w >> v))
      throw ConfigError("malformed spectrum row in " + path, lineno);
    t.omegas.push_back(w);
    t.values.push_back(v);
    if (ss >> vi) t.values_imag.push_back(vi);
  }
  if (!t.values_imag.empty() && t.values_imag.size() != t.values.size())
    throw ConfigError("spectrum " + path + " mixes 2- and 3-column rows");
  t.validate();
  return t;
}

// ---------------------------------------------------------------------
// Frequency grids and quadrature on tables
// ---------------------------------------------------------------------

inline std::vector<double> uniform_grid(double lo, double hi, int n) {
  if (n < 2 || !(hi > lo)) throw ConfigError("grid needs n >= 2 and hi > lo");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    g[std::size_t(i)] = lo + (hi - lo) * double(i) / double(n - 1);
  return g;
}

inline std::vector<double> merge_grids(std::vector<double> a,
                                       const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  std::vector<double> out;
  out.reserve(a.size());
  for (double w : a)
    if (out.empty() || w - out.back() > 1e-12 * (1.0 + std::abs(w)))
      out.push_back(w);
  return out;
}

// Coarse window covering the interaction scale, refined near w = 0 where
// the sharp spectral features live.
inline std::vector<double> default_frequency_grid(double u_scale,
                                                  double delta_scale) {
  const double d = delta_scale > 0.0 ? delta_scale : 1.0;
  const double half = std::max(2.0 * std::abs(u_scale), 10.0 * d);
  auto grid = uniform_grid(-half, half, 400);
  const int nf = 2 * int(std::lround(2.0 * d / (d / 20.0))) + 1;
  return merge_grids(std::move(grid), uniform_grid(-2.0 * d, 2.0 * d, nf));
}

inline double integrate_trapezoid(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ShapeError("trapezoid needs matching arrays with >= 2 points");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
  return acc;
}

inline double integrate_trapezoid(const SpectrumTable& t) {
  return integrate_trapezoid(t.omegas, t.values);
}

// ---------------------------------------------------------------------
// Correlation seeds
// ---------------------------------------------------------------------

enum class Side { Left, Right };

// {B rho_n} (or {rho_n B}), blockwise.  No tier-dependent parity factor:
// in this generator gauge the link coefficients carry the fermionic
// bookkeeping, a convention pinned end-to-end against the closed-form
// noninteracting solution (and its conjugate-pair identity) at exact
// termination.
inline BlockVector seed_correlation_rhs(const Hierarchy& h,
                                        const BlockVector& state,
                                        const Mat& B, Side side = Side::Left) {
  if (B.rows() != h.dim || B.cols() != h.dim)
    throw ShapeError("seed operator does not match the impurity dimension");
  if (state.count != h.count || state.dim != h.dim)
    throw ShapeError("state does not match hierarchy geometry");
  BlockVector out = h.make_state();
  for (std::size_t i = 0; i < h.count; ++i) {
    if (side == Side::Left)
      out.block(i).noalias() = B * state.block(i);
    else
      out.block(i).noalias() = state.block(i) * B;
  }
  return out;
}

// ---------------------------------------------------------------------
// Transport currents and current insertions
// ---------------------------------------------------------------------

namespace detail {

inline void require_lead(const Hierarchy& h, int alpha) {
  for (const auto& m : h.table.modes)
    if (m.alpha == alpha) return;
  throw ShapeError("no reservoir modes with lead index " +
                   std::to_string(alpha));
}

// sigma index of the system operator carried by a generator link
inline int link_op_sigma(const Hierarchy& h, const GenLink& lk) {
  const int s = h.table.modes[std::size_t(lk.mode)].sigma;
  return lk.up ? -s : s;
}

}  // namespace detail

// Tier-shifting representation of the current operator acting from the
// chosen side: left = I_alpha . state, right = state . I_alpha.  Built
// from the lead-filtered generator links, cL parts weighted by the sigma
// index of the link operator (left) or cR parts by its negative (right).
inline void apply_current_insertion(const Hierarchy& h, int alpha, Side side,
                                    const BlockVector& in, BlockVector& out,
                                    int workers = 1) {
  detail::require_lead(h, alpha);
  if (in.count != h.count || in.dim != h.dim || out.count != h.count ||
      out.dim != h.dim)
    throw ShapeError("state does not match hierarchy geometry");
  parallel_for(h.count, workers, [&](std::size_t lo, std::size_t hi) {
    Mat acc(h.dim, h.dim);
    for (std::size_t i = lo; i < hi; ++i) {
      acc.setZero();
      for (std::size_t l = h.link_offset[i]; l < h.link_offset[i + 1]; ++l) {
        const GenLink& lk = h.links[l];
        if (h.table.modes[std::size_t(lk.mode)].alpha != alpha) continue;
        const double w = double(detail::link_op_sigma(h, lk));
        const auto s = in.block(std::size_t(lk.src));
        const Mat& op = h.ops[std::size_t(lk.op)];
        if (side == Side::Left)
          acc.noalias() += (w * lk.cL) * (op * s);
        else
          acc.noalias() += (-w * lk.cR) * (s * op);
      }
      out.block(i) = acc;
    }
  });
}

// Tr over the root block of the left current insertion: equals the full
// current expectation Tr[I_alpha X] for any hierarchy state X, so only
// the tier-1 -> root links are touched.
inline cplx current_root_trace(const Hierarchy& h, int alpha,
                               const BlockVector& X) {
  detail::require_lead(h, alpha);
  if (X.count != h.count || X.dim != h.dim)
    throw ShapeError("state does not match hierarchy geometry");
  cplx tr = 0.0;
  for (std::size_t l = h.link_offset[0]; l < h.link_offset[1]; ++l) {
    const GenLink& lk = h.links[l];
    if (h.table.modes[std::size_t(lk.mode)].alpha != alpha) continue;
    const double w = double(detail::link_op_sigma(h, lk));
    tr += (w * lk.cL) *
          (h.ops[std::size_t(lk.op)] * X.block(std::size_t(lk.src))).trace();
  }
  return tr;
}

// Steady current flowing from lead alpha into the impurity.
inline double steady_current(const Hierarchy& h, const BlockVector& steady,
                             int alpha) {
  return current_root_trace(h, alpha, steady).real();
}

// ---------------------------------------------------------------------
// Impurity spectral function
// ---------------------------------------------------------------------

// A_{uu'}(w) = Re C_{a_u, a+_{u'}}(w) + Re C_{a+_{u'}, a_u}(-w), each term a
// (1/pi)-normalized one-sided transform evaluated at the solver level.
inline SpectrumTable impurity_spectral_function(
    const Hierarchy& h, const BlockVector& steady, int u, int u_prime,
    const std::vector<double>& omega_grid, const SolverConfig& cfg,
    FreqMethod method = FreqMethod::Auto) {
  const int n_orb = int(h.ops.size()) / 2;
  if (u < 0 || u >= n_orb || u_prime < 0 || u_prime >= n_orb)
    throw ShapeError("orbital index outside the impurity model");
  const Mat& a_u = h.ops[std::size_t(h.op_index(u, -1))];
  const Mat& adag_up = h.ops[std::size_t(h.op_index(u_prime, +1))];

  SpectrumTable t;
  t.kind = SpectrumKind::ImpurityA;
  t.labels = "u=" + std::to_string(u) + ",u'=" + std::to_string(u_prime);
  t.omegas = omega_grid;
  t.values.reserve(omega_grid.size());

  const BlockVector rhs1 = seed_correlation_rhs(h, steady, adag_up);
  const BlockVector rhs2 = seed_correlation_rhs(h, steady, a_u);
  BlockVector warm1 = h.make_state(), warm2 = h.make_state();
  for (double w : omega_grid) {
    auto x1 = solve_frequency_response(h, rhs1, w, cfg, method, &warm1);
    auto x2 = solve_frequency_response(h, rhs2, -w, cfg, method, &warm2);
    const cplx c1 = (a_u * x1.X.block(0)).trace() / PI;
    const cplx c2 = (adag_up * x2.X.block(0)).trace() / PI;
    t.values.push_back(c1.real() + c2.real());
    warm1.data.swap(x1.X.data);
    warm2.data.swap(x2.X.data);
  }
  t.validate();
  return t;
}

// ---------------------------------------------------------------------
// Current-noise spectra
// ---------------------------------------------------------------------

namespace detail {

// One lead's fluctuation machinery: seed dI_alpha . rho_ss and the
// matching measurement functional Tr[dI_alpha X] = Tr[I_alpha X] - I_a Tr[X].
struct FluctuationChannel {
  int alpha = 0;
  double mean = 0.0;
  BlockVector seed;
};

inline FluctuationChannel make_fluctuation_channel(const Hierarchy& h,
                                                   const BlockVector& steady,
                                                   int alpha, int workers) {
  FluctuationChannel c;
  c.alpha = alpha;
  c.mean = steady_current(h, steady, alpha);
  c.seed = h.make_state();
  apply_current_insertion(h, alpha, Side::Left, steady, c.seed, workers);
  c.seed.data -= c.mean * steady.data;
  return c;
}

inline cplx measure_fluctuation(const Hierarchy& h,
                                const FluctuationChannel& c,
                                const BlockVector& X) {
  return current_root_trace(h, c.alpha, X) - c.mean * X.block(0).trace();
}

}  // namespace detail

// Symmetrized current-noise spectrum: the anticommutator correlation
// (1/2)<{dI_a(t), dI_a'(0)}> is real in t, so its transform has an even
// real part and an odd imaginary part.  Auto spectra (a = a') compose as
// Re C_{dI_a,dI_a}(w) + Re C_{dI_a,dI_a}(-w) from two frequency solves
// per grid point.  Cross spectra average the two operator orderings,
//   Phi(w) = (1/2)[C_{aa'}(w) + conj C_{a'a}(w) + C_{a'a}(-w)
//                  + conj C_{aa'}(-w)],
// which needs four solves; values carry Re Phi and the optional column
// Im Phi.  An unaveraged ordering would leak an w-odd artifact into the
// real column and break the dN/dt consistency of the total noise.
inline SpectrumTable noise_spectrum(const Hierarchy& h,
                                    const BlockVector& steady, int alpha,
                                    int alpha_prime,
                                    const std::vector<double>& omega_grid,
                                    const SolverConfig& cfg,
                                    FreqMethod method = FreqMethod::Auto) {
  const int workers = std::max(1, cfg.workers);
  const auto chan_a =
      detail::make_fluctuation_channel(h, steady, alpha, workers);
  const auto chan_b =
      alpha_prime == alpha
          ? chan_a
          : detail::make_fluctuation_channel(h, steady, alpha_prime, workers);

  SpectrumTable t;
  t.kind = SpectrumKind::NoiseS;
  t.labels = "alpha=" + std::to_string(alpha) +
             ",alpha'=" + std::to_string(alpha_prime);
  t.omegas = omega_grid;

  BlockVector warm_bf = h.make_state(), warm_ab = h.make_state(),
              warm_af = h.make_state(), warm_bb = h.make_state();
  for (double w : omega_grid) {
    // C_{aa'}(+w): evolve the a' seed, measure lead a
    auto x_bf = solve_frequency_response(h, chan_b.seed, w, cfg, method,
                                         &warm_bf);
    // C_{a'a}(-w): evolve the a seed, measure lead a'
    auto x_ab = solve_frequency_response(h, chan_a.seed, -w, cfg, method,
                                         &warm_ab);
    const cplx c_ab_f = detail::measure_fluctuation(h, chan_a, x_bf.X) / PI;
    const cplx c_ba_b = detail::measure_fluctuation(h, chan_b, x_ab.X) / PI;
    if (alpha == alpha_prime) {
      t.values.push_back(c_ab_f.real() + c_ba_b.real());
    } else {
      // the remaining two orderings for the symmetric average
      auto x_af = solve_frequency_response(h, chan_a.seed, w, cfg, method,
                                           &warm_af);
      auto x_bb = solve_frequency_response(h, chan_b.seed, -w, cfg, method,
                                           &warm_bb);
      const cplx c_ba_f = detail::measure_fluctuation(h, chan_b, x_af.X) / PI;
      const cplx c_ab_b = detail::measure_fluctuation(h, chan_a, x_bb.X) / PI;
      const cplx phi = 0.5 * (c_ab_f + std::conj(c_ba_f) + c_ba_b +
                              std::conj(c_ab_b));
      t.values.push_back(phi.real());
      t.values_imag.push_back(phi.imag());
      warm_af.data.swap(x_af.X.data);
      warm_bb.data.swap(x_bb.X.data);
    }
    warm_bf.data.swap(x_bf.X.data);
    warm_ab.data.swap(x_ab.X.data);
  }
  t.validate();
  return t;
}

// All four lead pairs sharing one set of frequency solves (4 per grid
// point instead of the 12 that separate calls would spend).  RL is the
// elementwise conjugate of LR.
struct NoiseSet {
  SpectrumTable LL, RR, LR, RL;
};

inline NoiseSet noise_spectra(const Hierarchy& h, const BlockVector& steady,
                              const std::vector<double>& omega_grid,
                              const SolverConfig& cfg,
                              FreqMethod method = FreqMethod::Auto) {
  const int workers = std::max(1, cfg.workers);
  const auto chan_L = detail::make_fluctuation_channel(h, steady, 0, workers);
  const auto chan_R = detail::make_fluctuation_channel(h, steady, 1, workers);

  NoiseSet s;
  for (SpectrumTable* t : {&s.LL, &s.RR, &s.LR, &s.RL}) {
    t->kind = SpectrumKind::NoiseS;
    t->omegas = omega_grid;
  }
  s.LL.labels = "alpha=0,alpha'=0";
  s.RR.labels = "alpha=1,alpha'=1";
  s.LR.labels = "alpha=0,alpha'=1";
  s.RL.labels = "alpha=1,alpha'=0";

  BlockVector warm_Lf = h.make_state(), warm_Lb = h.make_state(),
              warm_Rf = h.make_state(), warm_Rb = h.make_state();
  for (double w : omega_grid) {
    auto xLf = solve_frequency_response(h, chan_L.seed, w, cfg, method,
                                        &warm_Lf);
    auto xLb = solve_frequency_response(h, chan_L.seed, -w, cfg, method,
                                        &warm_Lb);
    auto xRf = solve_frequency_response(h, chan_R.seed, w, cfg, method,
                                        &warm_Rf);
    auto xRb = solve_frequency_response(h, chan_R.seed, -w, cfg, method,
                                        &warm_Rb);
    const cplx c_LL_f = detail::measure_fluctuation(h, chan_L, xLf.X) / PI;
    const cplx c_LL_b = detail::measure_fluctuation(h, chan_L, xLb.X) / PI;
    const cplx c_RR_f = detail::measure_fluctuation(h, chan_R, xRf.X) / PI;
    const cplx c_RR_b = detail::measure_fluctuation(h, chan_R, xRb.X) / PI;
    const cplx c_LR_f = detail::measure_fluctuation(h, chan_L, xRf.X) / PI;
    const cplx c_RL_b = detail::measure_fluctuation(h, chan_R, xLb.X) / PI;
    const cplx c_RL_f = detail::measure_fluctuation(h, chan_R, xLf.X) / PI;
    const cplx c_LR_b = detail::measure_fluctuation(h, chan_L, xRb.X) / PI;

    s.LL.values.push_back(c_LL_f.real() + c_LL_b.real());
    s.RR.values.push_back(c_RR_f.real() + c_RR_b.real());
    const cplx phi_lr =
        0.5 * (c_LR_f + std::conj(c_RL_f) + c_RL_b + std::conj(c_LR_b));
    s.LR.values.push_back(phi_lr.real());
    s.LR.values_imag.push_back(phi_lr.imag());
    s.RL.values.push_back(phi_lr.real());
    s.RL.values_imag.push_back(-phi_lr.imag());

    warm_Lf.data.swap(xLf.X.data);
    warm_Lb.data.swap(xLb.X.data);
    warm_Rf.data.swap(xRf.X.data);
    warm_Rb.data.swap(xRb.X.data);
  }
  s.LL.validate();
  s.RR.validate();
  s.LR.validate();
  s.RL.validate();
  return s;
}

// ---------------------------------------------------------------------
// Composite detector noise and derivative
// ---------------------------------------------------------------------

// S(w) = a^2 S_LL + b^2 S_RR - 2ab Re S_LR for the detector combination
// a I_L - b I_R; only the real part of the cross spectrum enters.
inline SpectrumTable total_noise(const SpectrumTable& S_LL,
                                 const SpectrumTable& S_RR,
                                 const SpectrumTable& S_LR, double a = 0.5,
                                 double b = 0.5) {
  if (S_LL.omegas != S_RR.omegas || S_LL.omegas != S_LR.omegas)
    throw ShapeError("total noise needs identical frequency grids");
  SpectrumTable t;
  t.kind = SpectrumKind::NoiseS;
  t.labels = "total";
  t.omegas = S_LL.omegas;
  t.values.resize(S_LL.values.size());
  for (std::size_t i = 0; i < t.values.size(); ++i)
    t.values[i] = a * a * S_LL.values[i] + b * b * S_RR.values[i] -
                  2.0 * a * b * S_LR.values[i];
  t.validate();
  return t;
}

// Central differences inside, one-sided at the ends; uniform grids only.
inline SpectrumTable spectrum_derivative(const SpectrumTable& t) {
  t.validate();
  const std::size_t n = t.omegas.size();
  if (n < 2) throw ShapeError("derivative needs at least two grid points");
  const double step = t.omegas[1] - t.omegas[0];
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (std::abs(t.omegas[i + 1] - t.omegas[i] - step) > 1e-9 * step)
      throw ShapeError(
          "derivative needs a uniform frequency grid; resample first");
  SpectrumTable d;
  d.kind = SpectrumKind::NoiseDerivative;
  d.labels = t.labels;
  d.omegas = t.omegas;
  d.values.resize(n);
  auto diff = [&](const std::vector<double>& y, std::vector<double>& out) {
    out[0] = (y[1] - y[0]) / step;
    for (std::size_t i = 1; i + 1 < n; ++i)
      out[i] = (y[i + 1] - y[i - 1]) / (2.0 * step);
    out[n - 1] = (y[n - 1] - y[n - 2]) / step;
  };
  diff(t.values, d.values);
  if (!t.values_imag.empty()) {
    d.values_imag.resize(n);
    diff(t.values_imag, d.values_imag);
  }
  return d;
}

}  // namespace deom
