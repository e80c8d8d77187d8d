#pragma once

// Time propagation, damped self-consistent steady-state iteration, and
// frequency-domain linear solves on the hierarchy generator.
//
// Writing the equation of motion as d(state)/dt = G(state), the solvers
// work with -G = i*L_S + gamma_n + (coupling terms); its block-diagonal
// part D = i*L_S + gamma_n + Omega (+ s) is inverted exactly in the
// eigenbasis of H_S, which preconditions both the damped fixed-point
// iteration and the Krylov fallback.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"
#include "errors.hpp"
#include "hierarchy.hpp"

namespace deom {

struct SolverConfig {
  double omega_damp = 0.0;  // stability factor; 0 = choose automatically
  double tol = 1e-9;        // relative residual / change target
  int max_iter = 20000;
  double dt = 0.0;          // time step for propagation (0 = caller decides)
  double t_final = 0.0;
  int workers = 1;

  void validate() const {
    if (omega_damp < 0.0 || !(tol > 0.0) || max_iter < 1)
      throw ConfigError("solver needs omega_damp >= 0, tol > 0, max_iter >= 1");
  }
};

// Default stability factor: the largest total decay rate over tier-L
// indices (sum of the L largest Re gamma_j), which dominates the
// stiffest diagonal of the hierarchy.
inline double default_omega(const Hierarchy& h) {
  std::vector<double> rates;
  rates.reserve(std::size_t(h.J));
  for (const auto& m : h.table.modes) rates.push_back(m.gamma.real());
  std::sort(rates.begin(), rates.end(), std::greater<double>());
  double om = 0.0;
  for (int l = 0; l < std::min(h.L, int(rates.size())); ++l) om += rates[l];
  return om > 0.0 ? om : 1.0;
}

namespace detail {

// X -> V^dag X V per block (into the H_S eigenbasis) or back.
inline void to_eigenbasis(const Hierarchy& h, BlockVector& v, int workers) {
  parallel_for(v.count, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      v.block(i) = h.evecs.adjoint() * v.block(i) * h.evecs;
  });
}

inline void from_eigenbasis(const Hierarchy& h, BlockVector& v, int workers) {
  parallel_for(v.count, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      v.block(i) = h.evecs * v.block(i) * h.evecs.adjoint();
  });
}

// v <- D^{-1} v with D = i*L_S + gamma_n + shift, evaluated exactly in
// the H_S eigenbasis: entry (a,b) of block n divides by
// i(E_a - E_b) + gamma_n + shift.
inline void diagonal_solve(const Hierarchy& h, BlockVector& v, cplx shift,
                           int workers) {
  to_eigenbasis(h, v, workers);
  parallel_for(v.count, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto b = v.block(i);
      for (int col = 0; col < h.dim; ++col)
        for (int row = 0; row < h.dim; ++row)
          b(row, col) /= cplx(0.0, h.evals[row] - h.evals[col]) +
                         h.gamma_n[i] + shift;
    }
  });
  from_eigenbasis(h, v, workers);
}

// out = (-G + s) in  =  i[H, in] + gamma_n in + s in - coupling-free part
inline void apply_shifted_negative_generator(const Hierarchy& h,
                                             const BlockVector& in,
                                             BlockVector& out, cplx s,
                                             int workers) {
  h.apply_generator(in, out, workers);
  out.data = -out.data + s * in.data;
}

}  // namespace detail

// 4th-order Runge-Kutta propagation of d(state)/dt = G(state).
inline void propagate(const Hierarchy& h, BlockVector& state, double dt,
                      int n_steps, int workers = 1) {
  if (!(dt > 0.0)) throw ConfigError("propagation needs dt > 0");
  BlockVector k1 = h.make_state(), k2 = h.make_state(), k3 = h.make_state(),
              k4 = h.make_state(), tmp = h.make_state();
  const double guard = 1e6 * (state.norm() + 1e-300);
  for (int s = 0; s < n_steps; ++s) {
    h.apply_generator(state, k1, workers);
    tmp.data = state.data + 0.5 * dt * k1.data;
    h.apply_generator(tmp, k2, workers);
    tmp.data = state.data + 0.5 * dt * k2.data;
    h.apply_generator(tmp, k3, workers);
    tmp.data = state.data + dt * k3.data;
    h.apply_generator(tmp, k4, workers);
    state.data +=
        (dt / 6.0) * (k1.data + 2.0 * k2.data + 2.0 * k3.data + k4.data);
    if (state.norm() > guard)
      throw ConvergenceError("time propagation diverged (reduce dt)",
                             state.norm(), s + 1);
  }
}

struct SteadyStateResult {
  BlockVector state;
  double residual = 0.0;  // ||G(state)|| / ||state||
  int iterations = 0;
  std::vector<double> history;  // block-change metric per sweep
};

namespace detail {

inline double generator_residual(const Hierarchy& h, const BlockVector& v,
                                 BlockVector& scratch, int workers) {
  h.apply_generator(v, scratch, workers);
  return scratch.norm() / (v.norm() + 1e-300);
}

// Matrix-free BiCGSTAB on the preconditioned operator
//   T(x) = D^{-1} (-G + s - i w) x,
// solving T x = D^{-1} rhs. Returns the relative residual of the
// preconditioned system.
inline double bicgstab(const Hierarchy& h, const BlockVector& rhs,
                       BlockVector& x, cplx shift, double damp,
                       double tol, int max_iter, int workers) {
  const cplx dshift = damp + shift;
  auto apply_T = [&](const BlockVector& in, BlockVector& out) {
    apply_shifted_negative_generator(h, in, out, shift, workers);
    diagonal_solve(h, out, dshift, workers);
  };
  BlockVector b = rhs;
  diagonal_solve(h, b, dshift, workers);
  const double bnorm = b.norm() + 1e-300;

  BlockVector r = h.make_state(), t = h.make_state(), v = h.make_state(),
              p = h.make_state(), sv = h.make_state();
  apply_T(x, r);
  r.data = b.data - r.data;
  BlockVector r0 = r;
  cplx rho(1.0, 0.0), alpha(1.0, 0.0), w(1.0, 0.0);
  v.set_zero();
  p.set_zero();
  double res = r.norm() / bnorm;
  for (int it = 0; it < max_iter && res > tol; ++it) {
    const cplx rho1 = r0.data.dot(r.data);
    if (std::abs(rho1) < 1e-290) break;  // breakdown; restart not needed here
    const cplx beta = (rho1 / rho) * (alpha / w);
    rho = rho1;
    p.data = r.data + beta * (p.data - w * v.data);
    apply_T(p, v);
    alpha = rho / r0.data.dot(v.data);
    sv.data = r.data - alpha * v.data;
    apply_T(sv, t);
    const double tn = t.data.squaredNorm();
    w = tn > 0.0 ? t.data.dot(sv.data) / tn : cplx(0.0, 0.0);
    x.data += alpha * p.data + w * sv.data;
    r.data = sv.data - w * t.data;
    res = r.norm() / bnorm;
  }
  return res;
}

}  // namespace detail

// Damped self-consistent iteration for G(state) = 0 with the root
// normalized to unit trace; falls back to shifted inverse iteration with
// a preconditioned Krylov solve if the fixed-point map stalls.
inline SteadyStateResult solve_steady_state(const Hierarchy& h,
                                            const SolverConfig& cfg_in) {
  SolverConfig cfg = cfg_in;
  cfg.validate();
  const double Om = cfg.omega_damp > 0.0 ? cfg.omega_damp : default_omega(h);
  const int workers = std::max(1, cfg.workers);

  SteadyStateResult out;
  out.state = h.make_state();
  out.state.block(0) = Mat::Identity(h.dim, h.dim) / double(h.dim);

  BlockVector next = h.make_state(), scratch = h.make_state();
  double metric = 1e300;
  for (int it = 0; it < cfg.max_iter; ++it) {
    // next = D^{-1} (Omega * state + coupling(state)); the coupling terms
    // enter G with their own signs, so -G x = (i L_S + gamma) x - C x and
    // the fixed-point update adds +C x on the right-hand side
    h.apply_coupling(out.state, next, workers);
    next.data += Om * out.state.data;
    detail::diagonal_solve(h, next, Om, workers);
    const cplx tr = next.block(0).trace();
    if (std::abs(tr) > 1e-280) next.data /= tr;

    metric = 0.0;
    for (std::size_t i = 0; i < h.count; ++i) {
      const double d = (next.block(i) - out.state.block(i)).norm();
      const double base = out.state.block(i).norm();
      if (base > 0.0 || d > 0.0)
        metric = std::max(metric, d / (base + 1e-300));
    }
    out.state.data.swap(next.data);
    out.history.push_back(metric);
    out.iterations = it + 1;
    if (metric < cfg.tol) break;
    // stall detection: no order-of-magnitude progress over 200 sweeps
    const std::size_t n = out.history.size();
    if (n >= 200 && n % 200 == 0 &&
        out.history[n - 1] > 0.5 * out.history[n - 200])
      break;
  }

  out.residual =
      detail::generator_residual(h, out.state, scratch, workers);
  if (out.residual > cfg.tol) {
    // shifted inverse iteration amplifies the null direction; each round
    // is a preconditioned Krylov solve of (-G + s) x = x_prev
    double s = 1e-4 * Om;
    for (int round = 0; round < 8 && out.residual > cfg.tol; ++round) {
      BlockVector rhs = out.state;
      rhs.data *= s;  // keep the solution near unit scale
      detail::bicgstab(h, rhs, out.state, s, Om, cfg.tol * 1e-2,
                       cfg.max_iter, workers);
      const cplx tr = out.state.block(0).trace();
      if (std::abs(tr) > 1e-280) out.state.data /= tr;
      out.residual =
          detail::generator_residual(h, out.state, scratch, workers);
      if (round >= 2 && round % 2 == 0) s *= 0.1;
    }
  }
  if (out.residual > 10.0 * cfg.tol)
    throw ConvergenceError("steady-state solve", out.residual,
                           out.iterations);
  return out;
}

struct FrequencyResponse {
  double omega = 0.0;
  BlockVector X;
  std::string rhs_label;
  double residual = 0.0;
  int iterations = 0;
  bool used_krylov = false;
};

enum class FreqMethod { Auto, Damped, Krylov };

// Solve (i L_T - i w) X = rhs, i.e. (-G - i w) X = rhs, by the damped
// block-diagonal fixed-point iteration with an optional preconditioned
// BiCGSTAB fallback (FreqMethod::Auto) or either method alone. An
// optional warm start seeds sweeps over neighboring frequencies.
inline FrequencyResponse solve_frequency_response(
    const Hierarchy& h, const BlockVector& rhs, double omega,
    const SolverConfig& cfg_in, FreqMethod method = FreqMethod::Auto,
    const BlockVector* warm_start = nullptr) {
  SolverConfig cfg = cfg_in;
  cfg.validate();
  const double Om = cfg.omega_damp > 0.0 ? cfg.omega_damp : default_omega(h);
  const int workers = std::max(1, cfg.workers);
  const cplx shift(0.0, -omega);

  FrequencyResponse out;
  out.omega = omega;
  out.X = warm_start ? *warm_start : h.make_state();

  const double rhs_norm = rhs.data.norm() + 1e-300;
  BlockVector scratch = h.make_state();
  auto residual_of = [&](const BlockVector& x) {
    detail::apply_shifted_negative_generator(h, x, scratch, shift, workers);
    return (scratch.data - rhs.data).norm() / rhs_norm;
  };

  if (method != FreqMethod::Krylov) {
    // damped iteration: X <- D^{-1}(rhs + Omega X + coupling(X))
    BlockVector next = h.make_state();
    double res = 1e300;
    const int cap = method == FreqMethod::Damped ? cfg.max_iter
                                                 : std::min(cfg.max_iter, 400);
    for (int it = 0; it < cap; ++it) {
      h.apply_coupling(out.X, next, workers);
      next.data += rhs.data + Om * out.X.data;
      detail::diagonal_solve(h, next, Om + shift, workers);
      const double change =
          (next.data - out.X.data).norm() / (out.X.data.norm() + 1e-300);
      out.X.data.swap(next.data);
      out.iterations = it + 1;
      if (change < 0.1 * cfg.tol) break;
    }
    res = residual_of(out.X);
    out.residual = res;
    if (method == FreqMethod::Damped || res <= cfg.tol) {
      if (res > cfg.tol)
        throw ConvergenceError("frequency response at w=" +
                                   std::to_string(omega),
                               res, out.iterations);
      return out;
    }
  }

  out.used_krylov = true;
  detail::bicgstab(h, rhs, out.X, shift, Om, cfg.tol * 1e-2, cfg.max_iter,
                   workers);
  out.residual = residual_of(out.X);
  if (out.residual > cfg.tol)
    throw ConvergenceError(
        "frequency response at w=" + std::to_string(omega), out.residual,
        out.iterations);
  return out;
}

}  // namespace deom
