// Command-line front end for the dissipaton-equations-of-motion solver.
//
//   deom run <config>       full pipeline, CSV spectra + manifest.txt
//   deom fit-bath <config>  correlation decomposition only, mode-table CSV
//   deom count --J n --L n  hierarchy size calculator
//
// Exit codes: 0 ok, 2 configuration error, 3 convergence failure,
// 4 capacity (memory budget) error, 1 anything unexpected.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "deom/config.hpp"
#include "deom/hierarchy.hpp"
#include "deom/runner.hpp"

namespace {

deom::RunConfig load_with_overrides(const std::string& path,
                                    const std::string& out_dir, int workers) {
  deom::RunConfig cfg = deom::load_config(path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (workers > 0) cfg.solver.workers = workers;
  return cfg;
}

int dispatch(const std::string& sub, const std::string& config_path,
             const std::string& out_dir, int workers, int J, int L) {
  if (sub == "count") {
    std::printf("%llu\n",
                (unsigned long long)deom::hierarchy_count(J, L));
    return 0;
  }
  const deom::RunConfig cfg =
      load_with_overrides(config_path, out_dir, workers);
  if (sub == "fit-bath") {
    const deom::RunReport rep = deom::run_fit_bath(cfg);
    std::printf("fitted %d modes (K_per_channel x channels)\n", rep.J);
    for (std::size_t a = 0; a < cfg.baths.size(); ++a)
      std::printf("lead %s fit sup-error: %.3e\n",
                  cfg.baths[a].alpha_label.c_str(), rep.fit_errors[a]);
    for (const auto& f : rep.artifacts) std::printf("wrote %s\n", f.c_str());
    return 0;
  }
  const deom::RunReport rep = deom::run(cfg);
  std::printf("J = %d modes, %llu density-operator blocks\n", rep.J,
              (unsigned long long)rep.ddo_count);
  std::printf("steady state: %d iterations, residual %.3e\n",
              rep.steady_iterations, rep.steady_residual);
  if (rep.has_current)
    std::printf("I_L = %.10g, I_R = %.10g, sum = %.3e\n", rep.current_L,
                rep.current_R, rep.current_L + rep.current_R);
  for (const auto& f : rep.artifacts) std::printf("wrote %s\n", f.c_str());
  std::printf("wall time: %.2f s\n", rep.wall_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "deom: steady states, spectral functions, and current noise of "
      "quantum-dot models coupled to two Lorentzian reservoirs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int workers = 0, J = 0, L = 0;

  CLI::App* run_cmd =
      app.add_subcommand("run", "execute a configured model run");
  run_cmd->add_option("config", config_path, "configuration file")
      ->required();
  run_cmd->add_option("--out", out_dir, "override the output directory");
  run_cmd->add_option("--workers", workers, "override the worker count");

  CLI::App* fit_cmd = app.add_subcommand(
      "fit-bath", "decompose the reservoir correlation functions only");
  fit_cmd->add_option("config", config_path, "configuration file")
      ->required();
  fit_cmd->add_option("--out", out_dir, "override the output directory");
  fit_cmd->add_option("--workers", workers, "override the worker count");

  CLI::App* count_cmd = app.add_subcommand(
      "count", "print the density-operator block count for (J, L)");
  count_cmd->add_option("--J", J, "number of reservoir modes")->required();
  count_cmd->add_option("--L", L, "truncation tier")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad usage is a configuration error
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return dispatch(sub, config_path, out_dir, workers, J, L);
  } catch (const deom::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const deom::SingularityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const deom::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const deom::CapacityError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const deom::FitError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const deom::ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
