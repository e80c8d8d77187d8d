#pragma once

// Run orchestration: correlation decomposition -> hierarchy build ->
// steady state -> requested observables.  Every artifact is written to
// '<name>.partial' and renamed to its final name only when the whole run
// has succeeded, so a failed run leaves its completed pieces behind with
// the .partial suffix and never a half-trusted final file.  All iteration
// orders are fixed, so identical configs reproduce CSV outputs
// bit-for-bit; the manifest additionally records wall time.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "bath_fit.hpp"
#include "config.hpp"
#include "hierarchy.hpp"
#include "observables.hpp"
#include "solvers.hpp"

namespace deom {

struct RunReport {
  std::vector<std::string> artifacts;  // committed final paths
  int J = 0;
  std::uint64_t ddo_count = 0;
  std::vector<double> fit_errors;      // per lead, relative sup-norm
  double steady_residual = 0.0;
  int steady_iterations = 0;
  std::vector<double> occupations;     // <n_u> in the steady state
  bool has_current = false;
  double current_L = 0.0, current_R = 0.0;
  double wall_seconds = 0.0;
};

namespace detail {

// Staged outputs: files live under '<final>.partial' until commit().
class ArtifactSet {
 public:
  explicit ArtifactSet(const std::string& dir) : dir_(dir) {
    std::filesystem::create_directories(dir_);
  }

  std::string stage(const std::string& name) {
    pending_.emplace_back(dir_ / (name + ".partial"), dir_ / name);
    return pending_.back().first.string();
  }

  std::vector<std::string> commit() {
    std::vector<std::string> out;
    for (const auto& [partial, final_path] : pending_) {
      std::filesystem::rename(partial, final_path);
      out.push_back(final_path.string());
    }
    pending_.clear();
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>>
      pending_;
};

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const char* to_string(FitBackend b) {
  switch (b) {
    case FitBackend::Auto: return "auto";
    case FitBackend::Pole: return "pole";
    case FitBackend::Prony: return "prony";
  }
  return "?";
}

// Normalized echo of every interpreted config field, fixed order.
inline std::string config_echo(const RunConfig& cfg) {
  std::ostringstream s;
  s << "model.kind = " << cfg.model_kind << "\n";
  if (cfg.model_kind == "single") {
    s << "model.eps = " << fmt(cfg.eps) << "\n";
    s << "model.U = " << fmt(cfg.U) << "\n";
  } else {
    s << "model.U = " << fmt(cfg.dqd.U) << "\n";
    s << "model.U_C = " << fmt(cfg.dqd.U_C) << "\n";
    s << "model.T_C = " << fmt(cfg.dqd.T_C) << "\n";
    s << "model.N = " << cfg.dqd.N << "\n";
    s << "model.eps1 = " << fmt(cfg.dqd.eps1) << "\n";
    s << "model.eps2 = " << fmt(cfg.dqd.eps2) << "\n";
  }
  for (const auto& b : cfg.baths) {
    const std::string p = "bath." + b.alpha_label + ".";
    s << p << "delta = " << fmt(b.delta) << "\n";
    s << p << "W = " << fmt(b.W) << "\n";
    s << p << "beta = " << fmt(b.beta) << "\n";
    s << p << "mu = " << fmt(b.mu) << "\n";
    s << p << "orbitals =";
    for (int u : b.coupled_orbitals) s << " " << u;
    s << "\n";
  }
  s << "fit.K = " << cfg.fit.K << "\n";
  s << "fit.tol = " << fmt(cfg.fit.tol) << "\n";
  s << "fit.backend = " << to_string(cfg.fit.backend) << "\n";
  s << "hierarchy.L = " << cfg.L << "\n";
  s << "hierarchy.budget = " << cfg.budget << "\n";
  s << "solver.tol = " << fmt(cfg.solver.tol) << "\n";
  s << "solver.max_iter = " << cfg.solver.max_iter << "\n";
  s << "solver.omega_damp = " << fmt(cfg.solver.omega_damp) << "\n";
  s << "solver.workers = " << cfg.solver.workers << "\n";
  s << "grid = [" << fmt(cfg.grid.lo) << ", " << fmt(cfg.grid.hi)
    << "] n = " << cfg.grid.n << "\n";
  s << "observables.spectral =";
  for (const auto& [u, v] : cfg.observables.spectral)
    s << " " << u << ":" << v;
  s << "\n";
  s << "observables.current = "
    << (cfg.observables.current ? "true" : "false") << "\n";
  s << "observables.noise =";
  if (cfg.observables.noise_LL) s << " LL";
  if (cfg.observables.noise_RR) s << " RR";
  if (cfg.observables.noise_LR) s << " LR";
  if (cfg.observables.noise_RL) s << " RL";
  if (cfg.observables.noise_total) s << " total";
  s << "\n";
  s << "observables.noise_a = " << fmt(cfg.observables.noise_a) << "\n";
  s << "observables.noise_b = " << fmt(cfg.observables.noise_b) << "\n";
  s << "observables.noise_derivative = "
    << (cfg.observables.noise_derivative ? "true" : "false") << "\n";
  s << "output.dir = " << cfg.out_dir << "\n";
  return s.str();
}

// One-line parameter stamp for CSV headers.
inline std::string config_param_line(const RunConfig& cfg) {
  std::string echo = config_echo(cfg);
  for (char& c : echo)
    if (c == '\n') c = ' ';
  while (!echo.empty() && echo.back() == ' ') echo.pop_back();
  return echo;
}

// Relative sup-error of the stamped modes of one lead against the exact
// equilibrium correlation.  The sigma = -1 channel carries the fitted
// exponents shifted by +i mu, so un-shifting recovers the equilibrium fit.
inline double lead_fit_error(const ModeTable& table, const LorentzBath& b,
                             int alpha) {
  std::vector<ExpMode> modes;
  const int u0 = b.coupled_orbitals.front();
  for (const auto& m : table.modes)
    if (m.alpha == alpha && m.u == u0 && m.sigma == -1)
      modes.push_back({m.eta, m.gamma - cplx(0.0, b.mu)});
  LorentzBath eq = b;
  eq.mu = 0.0;
  return reconstruction_error(modes, sample_correlation(eq));
}

}  // namespace detail

// Decomposition only: fit both reservoirs, write the mode table CSV.
inline RunReport run_fit_bath(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  detail::ArtifactSet artifacts(cfg.out_dir);

  const ModeTable table = build_mode_table(cfg.baths, cfg.fit);
  rep.J = table.size();
  for (std::size_t a = 0; a < cfg.baths.size(); ++a)
    rep.fit_errors.push_back(
        detail::lead_fit_error(table, cfg.baths[a], int(a)));

  save_mode_table(table, artifacts.stage("mode_table.csv"));
  rep.artifacts = artifacts.commit();
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rep;
}

// Full pipeline.  Throws on any stage failure, leaving whatever artifacts
// were already completed under their .partial names.
inline RunReport run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  detail::ArtifactSet artifacts(cfg.out_dir);
  const std::string params = detail::config_param_line(cfg);
  const auto& ob = cfg.observables;

  // model + decomposition + hierarchy
  const FockOperatorSet ops = build_fock_operators(cfg.n_orbitals());
  const Mat H = cfg.hamiltonian(ops);
  const ModeTable table = build_mode_table(cfg.baths, cfg.fit);
  rep.J = table.size();
  for (std::size_t a = 0; a < cfg.baths.size(); ++a)
    rep.fit_errors.push_back(
        detail::lead_fit_error(table, cfg.baths[a], int(a)));
  const Hierarchy h = build_hierarchy(table, H, cfg.L, cfg.budget);
  rep.ddo_count = h.count;

  // steady state
  const SteadyStateResult ss = solve_steady_state(h, cfg.solver);
  rep.steady_residual = ss.residual;
  rep.steady_iterations = ss.iterations;
  for (int u = 0; u < ops.n_orbitals; ++u)
    rep.occupations.push_back(
        (ops.number(u) * ss.state.block(0)).trace().real());

  // observables
  const std::vector<double> grid = cfg.grid.make();
  struct Written {
    std::string name;
    std::size_t rows;
  };
  std::vector<Written> written;
  auto emit = [&](const std::string& name, const SpectrumTable& t) {
    save_spectrum(artifacts.stage(name), t, params);
    written.push_back({name, t.omegas.size()});
  };
  auto emit_with_derivative = [&](const std::string& stem,
                                  const SpectrumTable& t) {
    emit(stem + ".csv", t);
    if (ob.noise_derivative)
      emit(stem + "_dSdw.csv", spectrum_derivative(t));
  };

  for (const auto& [u, v] : ob.spectral) {
    const SpectrumTable A =
        impurity_spectral_function(h, ss.state, u, v, grid, cfg.solver);
    emit("A_" + std::to_string(u) + "_" + std::to_string(v) + ".csv", A);
  }

  if (ob.current) {
    rep.has_current = true;
    rep.current_L = steady_current(h, ss.state, 0);
    rep.current_R = steady_current(h, ss.state, 1);
  }

  if (ob.any_noise()) {
    const bool only_LL = ob.noise_LL && !ob.noise_RR && !ob.noise_LR &&
                         !ob.noise_RL && !ob.noise_total;
    const bool only_RR = ob.noise_RR && !ob.noise_LL && !ob.noise_LR &&
                         !ob.noise_RL && !ob.noise_total;
    if (only_LL || only_RR) {
      const int a = only_LL ? 0 : 1;
      const SpectrumTable S =
          noise_spectrum(h, ss.state, a, a, grid, cfg.solver);
      emit_with_derivative(only_LL ? "noise_LL" : "noise_RR", S);
    } else {
      const NoiseSet S = noise_spectra(h, ss.state, grid, cfg.solver);
      if (ob.noise_LL) emit_with_derivative("noise_LL", S.LL);
      if (ob.noise_RR) emit_with_derivative("noise_RR", S.RR);
      if (ob.noise_LR) emit_with_derivative("noise_LR", S.LR);
      if (ob.noise_RL) emit_with_derivative("noise_RL", S.RL);
      if (ob.noise_total) {
        SpectrumTable total =
            total_noise(S.LL, S.RR, S.LR, ob.noise_a, ob.noise_b);
        emit_with_derivative("noise_total", total);
      }
    }
  }

  // manifest
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  {
    const std::string path = artifacts.stage("manifest.txt");
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path + " for writing");
    out << "deom run manifest\n\n";
    out << "[configuration]\n" << detail::config_echo(cfg) << "\n";
    out << "[mode table]\n";
    out << "J = " << table.size()
        << " modes, K_per_channel = " << table.K_per_channel << "\n";
    for (std::size_t a = 0; a < cfg.baths.size(); ++a)
      out << "fit sup-error (relative, equilibrium grid) lead "
          << cfg.baths[a].alpha_label << " = " << detail::fmt(rep.fit_errors[a])
          << "\n";
    out << "alpha,u,sigma,k,re_eta,im_eta,re_gamma,im_gamma\n";
    for (const auto& m : table.modes) {
      char line[256];
      std::snprintf(line, sizeof line, "%d,%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n",
                    m.alpha, m.u, m.sigma, m.k, m.eta.real(), m.eta.imag(),
                    m.gamma.real(), m.gamma.imag());
      out << line;
    }
    out << "\n[hierarchy]\n";
    out << "J = " << h.J << ", L = " << h.L << ", dim = " << h.dim << "\n";
    out << "ddo_count = " << h.count
        << "  (root + all index sets up to tier L)\n";
    out << "\n[steady state]\n";
    out << "iterations = " << rep.steady_iterations << "\n";
    out << "residual = " << detail::fmt(rep.steady_residual) << "\n";
    for (int u = 0; u < ops.n_orbitals; ++u)
      out << "occupation n_" << u << " = "
          << detail::fmt(rep.occupations[std::size_t(u)]) << "\n";
    if (rep.has_current) {
      out << "\n[transport]\n";
      out << "I_L = " << detail::fmt(rep.current_L) << "\n";
      out << "I_R = " << detail::fmt(rep.current_R) << "\n";
      out << "I_L + I_R = " << detail::fmt(rep.current_L + rep.current_R)
          << "\n";
    }
    out << "\n[artifacts]\n";
    for (const auto& w : written)
      out << w.name << ": " << w.rows << " rows\n";
    out << "\n[timing]\n";
    out << "wall_seconds = " << detail::fmt(rep.wall_seconds) << "\n";
    if (!out) throw Error("short write to " + path);
  }

  rep.artifacts = artifacts.commit();
  return rep;
}

}  // namespace deom
