#pragma once

// Run configuration: a sectioned key = value text format parsed into a
// fully validated RunConfig. Unknown sections and keys are rejected, every
// parse or range error carries the offending line number, and all optional
// keys have documented defaults (hierarchy L = 3, fit tol = 0.02, ...).
//
// Grammar: '#' or ';' starts a comment; '[name]' opens a section; other
// nonempty lines are 'key = value'. List values are space-separated.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bath.hpp"
#include "bath_fit.hpp"
#include "errors.hpp"
#include "fock.hpp"
#include "solvers.hpp"

namespace deom {

struct GridSpec {
  double lo = -10.0, hi = 10.0;
  int n = 201;

  std::vector<double> make() const {
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      g[std::size_t(i)] = lo + (hi - lo) * double(i) / double(n - 1);
    return g;
  }
};

struct ObservablesRequest {
  std::vector<std::pair<int, int>> spectral;  // (u, u') pairs for A_{uu'}
  bool current = false;
  bool noise_LL = false, noise_RR = false, noise_LR = false,
       noise_RL = false, noise_total = false;
  double noise_a = 0.5, noise_b = 0.5;  // detector weights a I_L - b I_R
  bool noise_derivative = false;

  bool any_noise() const {
    return noise_LL || noise_RR || noise_LR || noise_RL || noise_total;
  }
  bool any_transport() const { return current || any_noise(); }
};

struct RunConfig {
  std::string model_kind;  // "single" | "dqd"
  double eps = 0.0, U = 0.0;  // single dot
  DqdParameters dqd;          // double dot

  std::vector<LorentzBath> baths;  // exactly two, L then R

  FitOptions fit;
  int L = 3;
  std::uint64_t budget = std::uint64_t(1) << 22;
  SolverConfig solver;

  ObservablesRequest observables;
  GridSpec grid;
  std::string out_dir = "out";

  int n_orbitals() const { return model_kind == "dqd" ? 4 : 2; }

  Mat hamiltonian(const FockOperatorSet& ops) const {
    return model_kind == "dqd" ? build_dqd_hamiltonian(dqd, ops)
                               : build_single_dot_hamiltonian(eps, U, ops);
  }
};

namespace detail {

struct RawEntry {
  std::string key, value;
  int line = 0;
  bool used = false;
};

struct RawConfig {
  std::map<std::string, std::vector<RawEntry>> sections;
  std::map<std::string, int> section_line;
};

inline std::string trimmed(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline RawConfig tokenize_config(const std::string& text) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cmt = line.find_first_of("#;");
    if (cmt != std::string::npos) line.erase(cmt);
    line = trimmed(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("unterminated section header", lineno);
      section = trimmed(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("empty section name", lineno);
      if (!raw.section_line.count(section))
        raw.section_line[section] = lineno;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected 'key = value' or '[section]'", lineno);
    const std::string key = trimmed(line.substr(0, eq));
    const std::string value = trimmed(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", lineno);
    if (value.empty())
      throw ConfigError("missing value for key '" + key + "'", lineno);
    if (section.empty())
      throw ConfigError("key '" + key + "' appears before any [section]",
                        lineno);
    for (const auto& e : raw.sections[section])
      if (e.key == key)
        throw ConfigError("duplicate key '" + key + "' in [" + section + "]",
                          lineno);
    raw.sections[section].push_back({key, value, lineno});
  }
  return raw;
}

// Typed access to one section's entries with unknown-key detection.
class Section {
 public:
  Section(RawConfig& raw, std::string name)
      : name_(std::move(name)) {
    auto it = raw.sections.find(name_);
    entries_ = it == raw.sections.end() ? nullptr : &it->second;
  }

  bool present() const { return entries_ != nullptr; }

  RawEntry* find(const std::string& key) {
    if (!entries_) return nullptr;
    for (auto& e : *entries_)
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    return nullptr;
  }

  double get_double(const std::string& key, double def) {
    RawEntry* e = find(key);
    return e ? to_double(*e) : def;
  }

  double require_double(const std::string& key) {
    RawEntry* e = find(key);
    if (!e) throw missing(key);
    return to_double(*e);
  }

  // value must satisfy v > 0 (non-physical otherwise)
  double require_positive(const std::string& key) {
    RawEntry* e = find(key);
    if (!e) throw missing(key);
    const double v = to_double(*e);
    if (!(v > 0.0))
      throw ConfigError("'" + key + "' must be > 0", e->line);
    return v;
  }

  double get_positive(const std::string& key, double def) {
    RawEntry* e = find(key);
    if (!e) return def;
    const double v = to_double(*e);
    if (!(v > 0.0))
      throw ConfigError("'" + key + "' must be > 0", e->line);
    return v;
  }

  long long get_int(const std::string& key, long long def,
                    long long lo = std::numeric_limits<long long>::min(),
                    long long hi = std::numeric_limits<long long>::max()) {
    RawEntry* e = find(key);
    if (!e) return def;
    const long long v = to_int(*e);
    if (v < lo || v > hi)
      throw ConfigError("'" + key + "' must be in [" + std::to_string(lo) +
                            ", " + std::to_string(hi) + "]",
                        e->line);
    return v;
  }

  bool get_bool(const std::string& key, bool def) {
    RawEntry* e = find(key);
    if (!e) return def;
    std::string v = e->value;
    for (char& c : v) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError("'" + key + "' expects a boolean, got '" + e->value +
                          "'",
                      e->line);
  }

  std::string get_string(const std::string& key, const std::string& def) {
    RawEntry* e = find(key);
    return e ? e->value : def;
  }

  std::string require_string(const std::string& key) {
    RawEntry* e = find(key);
    if (!e) throw missing(key);
    return e->value;
  }

  std::vector<std::string> get_list(const std::string& key) {
    RawEntry* e = find(key);
    std::vector<std::string> out;
    if (!e) return out;
    std::istringstream ss(e->value);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }

  int line_of(const std::string& key) const {
    if (entries_)
      for (const auto& e : *entries_)
        if (e.key == key) return e.line;
    return -1;
  }

  // every key must have been consumed by one of the getters above
  void finish() const {
    if (!entries_) return;
    for (const auto& e : *entries_)
      if (!e.used)
        throw ConfigError("unknown key '" + e.key + "' in [" + name_ + "]",
                          e.line);
  }

 private:
  ConfigError missing(const std::string& key) const {
    return ConfigError("section [" + name_ + "] is missing required key '" +
                       key + "'");
  }

  double to_double(const RawEntry& e) const {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(e.value, &pos);
    } catch (const std::exception&) {
      throw ConfigError("'" + e.key + "' expects a number, got '" + e.value +
                            "'",
                        e.line);
    }
    if (pos != e.value.size())
      throw ConfigError("trailing characters after number in '" + e.key + "'",
                        e.line);
    return v;
  }

  long long to_int(const RawEntry& e) const {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(e.value, &pos);
    } catch (const std::exception&) {
      throw ConfigError("'" + e.key + "' expects an integer, got '" +
                            e.value + "'",
                        e.line);
    }
    if (pos != e.value.size())
      throw ConfigError("trailing characters after integer in '" + e.key +
                            "'",
                        e.line);
    return v;
  }

  std::string name_;
  std::vector<RawEntry>* entries_;
};

inline int parse_orbital(const std::string& tok, int n_orb, int line) {
  std::size_t pos = 0;
  int u = -1;
  try {
    u = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != tok.size() || u < 0 || u >= n_orb)
    throw ConfigError("orbital '" + tok + "' is not an index in [0, " +
                          std::to_string(n_orb - 1) + "]",
                      line);
  return u;
}

inline LorentzBath parse_bath(RawConfig& raw, const std::string& section,
                              const std::string& label, int n_orb,
                              const std::vector<int>& default_orbitals) {
  if (!raw.sections.count(section))
    throw ConfigError("missing required section [" + section + "]");
  Section s(raw, section);
  LorentzBath b;
  b.alpha_label = label;
  b.delta = s.require_positive("delta");
  b.W = s.require_positive("W");
  b.beta = s.require_positive("beta");
  b.mu = s.get_double("mu", 0.0);
  const auto toks = s.get_list("orbitals");
  if (toks.empty()) {
    b.coupled_orbitals = default_orbitals;
  } else {
    const int line = s.line_of("orbitals");
    for (const auto& t : toks)
      b.coupled_orbitals.push_back(parse_orbital(t, n_orb, line));
  }
  s.finish();
  return b;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  detail::RawConfig raw = detail::tokenize_config(text);
  RunConfig cfg;

  // ---- [model] ----
  if (!raw.sections.count("model"))
    throw ConfigError("missing required section [model]");
  detail::Section model(raw, "model");
  cfg.model_kind = model.require_string("kind");
  if (cfg.model_kind != "single" && cfg.model_kind != "dqd")
    throw ConfigError("model kind must be 'single' or 'dqd', got '" +
                          cfg.model_kind + "'",
                      model.line_of("kind"));
  if (cfg.model_kind == "single") {
    cfg.eps = model.get_double("eps", 0.0);
    cfg.U = model.get_double("U", 0.0);
    for (const char* k : {"eps1", "eps2", "U_C", "T_C", "N"})
      if (model.find(k))
        throw ConfigError("key '" + std::string(k) +
                              "' applies only to the dqd model",
                          model.line_of(k));
  } else {
    cfg.dqd.U = model.get_double("U", 0.0);
    cfg.dqd.U_C = model.get_double("U_C", 0.0);
    cfg.dqd.T_C = model.get_double("T_C", 0.0);
    cfg.dqd.N = int(model.get_int("N", 1, -8, 8));
    const bool has1 = model.find("eps1") != nullptr;
    const bool has2 = model.find("eps2") != nullptr;
    if (has1 != has2)
      throw ConfigError(
          "give both eps1 and eps2, or neither (filling scheme)",
          model.line_of(has1 ? "eps1" : "eps2"));
    if (has1) {
      cfg.dqd.eps1 = model.get_double("eps1", 0.0);
      cfg.dqd.eps2 = model.get_double("eps2", 0.0);
    } else {
      // filling scheme: eps_i = -(U + 2 N U_C)/2
      cfg.dqd.eps1 = cfg.dqd.eps2 =
          epsilon_from_scheme(cfg.dqd.U, cfg.dqd.U_C, cfg.dqd.N);
    }
    if (model.find("eps"))
      throw ConfigError("key 'eps' applies only to the single-dot model",
                        model.line_of("eps"));
  }
  model.finish();
  const int n_orb = cfg.n_orbitals();

  // ---- [bath.L] / [bath.R] ----
  // default wiring: the left lead couples to dot 1 (orbitals 0, 1); the
  // right lead to dot 2 for the double dot and to the same single dot
  // otherwise
  const std::vector<int> def_L = {0, 1};
  const std::vector<int> def_R =
      cfg.model_kind == "dqd" ? std::vector<int>{2, 3} : std::vector<int>{0, 1};
  cfg.baths.push_back(detail::parse_bath(raw, "bath.L", "L", n_orb, def_L));
  cfg.baths.push_back(detail::parse_bath(raw, "bath.R", "R", n_orb, def_R));

  // ---- [fit] ----
  detail::Section fit(raw, "fit");
  cfg.fit.K = int(fit.get_int("K", 0, 0, 64));
  cfg.fit.tol = fit.get_positive("tol", 0.02);
  if (cfg.fit.K == 0 && cfg.fit.tol > 0.1)
    throw ConfigError("automatic K needs tol in (0, 0.1]",
                      fit.line_of("tol"));
  cfg.fit.backend = parse_backend(fit.get_string("backend", "auto"));
  fit.finish();

  // ---- [hierarchy] ----
  detail::Section hier(raw, "hierarchy");
  cfg.L = int(hier.get_int("L", 3, 0, 62));
  cfg.budget = std::uint64_t(
      hier.get_int("budget", (long long)(std::uint64_t(1) << 22), 1,
                   (long long)(std::uint64_t(1) << 62)));
  hier.finish();

  // ---- [solver] ----
  detail::Section solver(raw, "solver");
  cfg.solver.tol = solver.get_positive("tol", 1e-9);
  cfg.solver.max_iter = int(solver.get_int("max_iter", 20000, 1, 1 << 30));
  cfg.solver.omega_damp = solver.get_double("omega_damp", 0.0);
  if (cfg.solver.omega_damp < 0.0)
    throw ConfigError("'omega_damp' must be >= 0",
                      solver.line_of("omega_damp"));
  cfg.solver.workers = int(solver.get_int("workers", 1, 1, 256));
  solver.finish();

  // ---- [grid] ----
  detail::Section grid(raw, "grid");
  cfg.grid.lo = grid.get_double("lo", -10.0);
  cfg.grid.hi = grid.get_double("hi", 10.0);
  cfg.grid.n = int(grid.get_int("n", 201, 2, 1 << 20));
  if (!(cfg.grid.hi > cfg.grid.lo))
    throw ConfigError("grid needs hi > lo",
                      grid.present() ? raw.section_line.at("grid") : -1);
  grid.finish();

  // ---- [observables] ----
  detail::Section obs(raw, "observables");
  {
    const auto toks = obs.get_list("spectral");
    const int line = obs.line_of("spectral");
    for (const auto& t : toks) {
      const auto colon = t.find(':');
      if (colon == std::string::npos) {
        const int u = detail::parse_orbital(t, n_orb, line);
        cfg.observables.spectral.emplace_back(u, u);
      } else {
        const int u = detail::parse_orbital(t.substr(0, colon), n_orb, line);
        const int v = detail::parse_orbital(t.substr(colon + 1), n_orb, line);
        cfg.observables.spectral.emplace_back(u, v);
      }
    }
  }
  cfg.observables.current = obs.get_bool("current", false);
  {
    const auto toks = obs.get_list("noise");
    const int line = obs.line_of("noise");
    for (const auto& t : toks) {
      if (t == "LL") cfg.observables.noise_LL = true;
      else if (t == "RR") cfg.observables.noise_RR = true;
      else if (t == "LR") cfg.observables.noise_LR = true;
      else if (t == "RL") cfg.observables.noise_RL = true;
      else if (t == "total") cfg.observables.noise_total = true;
      else
        throw ConfigError("noise token '" + t +
                              "' is not one of LL RR LR RL total",
                          line);
    }
  }
  cfg.observables.noise_a = obs.get_double("noise_a", 0.5);
  cfg.observables.noise_b = obs.get_double("noise_b", 0.5);
  cfg.observables.noise_derivative = obs.get_bool("noise_derivative", false);
  if (cfg.observables.noise_derivative && !cfg.observables.any_noise())
    throw ConfigError("noise_derivative needs at least one noise spectrum",
                      obs.line_of("noise_derivative"));
  obs.finish();

  // ---- [output] ----
  detail::Section output(raw, "output");
  cfg.out_dir = output.get_string("dir", "out");
  output.finish();

  // ---- unknown sections ----
  for (const auto& [name, line] : raw.section_line) {
    static const char* known[] = {"model",  "bath.L",      "bath.R",
                                  "fit",    "hierarchy",   "solver",
                                  "grid",   "observables", "output"};
    bool ok = false;
    for (const char* k : known) ok = ok || name == k;
    if (!ok) throw ConfigError("unknown section [" + name + "]", line);
  }

  // ---- cross-field validation ----
  if (cfg.observables.any_transport() && cfg.L < 1)
    throw ConfigError("transport observables need hierarchy L >= 1");
  cfg.solver.validate();
  for (const auto& b : cfg.baths) b.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace deom
