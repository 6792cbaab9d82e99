// qtb: sweeps, bound certificates, Monte Carlo checks and classical-limit
// verification from the command line.

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qtb/commands.hpp"

namespace {

// Options are bound to scratch values and copied into the spec only when
// given, so that flags override a --config file and defaults stay in RunSpec.
struct Binder {
  std::vector<std::function<void(qtb::RunSpec&)>> apply;

  template <typename T, typename Set>
  void add(CLI::App* app, const std::string& name, const std::string& help, Set set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    apply.push_back([opt, value, set](qtb::RunSpec& s) {
      if (opt->count() > 0) set(s, *value);
    });
  }
};

void add_model_options(CLI::App* app, Binder& b) {
  b.add<std::string>(app, "--model", "'maser' or a JSON model file",
                     [](auto& s, const auto& v) { s.model = v; });
  b.add<double>(app, "--gamma-h", "hot coupling rate", [](auto& s, double v) { s.maser.gamma_h = v; });
  b.add<double>(app, "--gamma-c", "cold coupling rate", [](auto& s, double v) { s.maser.gamma_c = v; });
  b.add<double>(app, "--n-h", "hot bath occupation", [](auto& s, double v) { s.maser.n_h = v; });
  b.add<double>(app, "--n-c", "cold bath occupation", [](auto& s, double v) { s.maser.n_c = v; });
  b.add<double>(app, "--omega", "drive amplitude", [](auto& s, double v) { s.maser.omega = v; });
  b.add<double>(app, "--delta", "detuning", [](auto& s, double v) { s.maser.delta = v; });
  b.add<double>(app, "--tau", "observation time", [](auto& s, double v) { s.tau = v; });
  b.add<std::vector<double>>(app, "--counting", "counting weights in channel order",
                             [](auto& s, const auto& v) { s.counting = v; });
  b.add<std::string>(app, "--output,-o", "output file (default stdout)",
                     [](auto& s, const auto& v) { s.output = v; });
}

int run(const std::function<int(const qtb::RunSpec&, std::ostream&, std::ostream&)>& cmd,
        const qtb::RunSpec& spec) {
  if (spec.output.empty()) return cmd(spec, std::cout, std::cerr);
  std::ostringstream buf;
  const int code = cmd(spec, buf, std::cerr);
  std::ofstream f(spec.output, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot write " << spec.output << "\n";
    return 2;
  }
  f << buf.str();
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty bounds for Markovian open quantum systems"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON file with RunSpec keys")->check(CLI::ExistingFile);

  Binder sweep_b;
  Binder bounds_b;
  Binder traj_b;
  Binder classical_b;

  CLI::App* sweep = app.add_subcommand("sweep", "parameter sweep as CSV");
  add_model_options(sweep, sweep_b);
  sweep_b.add<std::string>(sweep, "--parameter", "swept parameter (delta, omega, ..., tau)",
                           [](auto& s, const auto& v) { s.parameter = v; });
  sweep_b.add<double>(sweep, "--lo", "range start", [](auto& s, double v) { s.lo = v; });
  sweep_b.add<double>(sweep, "--hi", "range end", [](auto& s, double v) { s.hi = v; });
  sweep_b.add<int>(sweep, "--points", "grid points", [](auto& s, int v) { s.points = v; });
  sweep_b.add<std::vector<std::string>>(sweep, "--bounds", "bounds that set the exit code",
                                        [](auto& s, const auto& v) { s.bounds = v; });
  sweep_b.add<std::size_t>(sweep, "--rkur-samples", "random counting vectors per point",
                           [](auto& s, std::size_t v) { s.rkur_samples = v; });
  sweep_b.add<std::uint64_t>(sweep, "--seed", "seed", [](auto& s, std::uint64_t v) { s.seed = v; });
  sweep_b.add<std::string>(sweep, "--delta-mode", "finite or asymptotic",
                           [](auto& s, const auto& v) { s.delta_mode = v; });

  CLI::App* bounds = app.add_subcommand("bounds", "bound certificate as JSON");
  add_model_options(bounds, bounds_b);
  bounds_b.add<std::vector<std::string>>(bounds, "--bounds", "tkur iur rkur eps_response power_efficiency",
                                         [](auto& s, const auto& v) { s.bounds = v; });
  bounds_b.add<std::string>(bounds, "--delta-mode", "finite or asymptotic",
                            [](auto& s, const auto& v) { s.delta_mode = v; });
  bounds_b.add<double>(bounds, "--delta-override", "replace the computed coherent correction",
                       [](auto& s, double v) { s.delta_override = v; });
  bounds_b.add<double>(bounds, "--omega-h", "hot energy quantum", [](auto& s, double v) { s.omega_h = v; });
  bounds_b.add<double>(bounds, "--omega-c", "cold energy quantum", [](auto& s, double v) { s.omega_c = v; });
  bounds_b.add<std::vector<double>>(bounds, "--omega-prime", "rate derivatives for eps_response",
                                    [](auto& s, const auto& v) { s.omega_prime = v; });

  CLI::App* traj = app.add_subcommand("traj", "Monte Carlo moments against exact values");
  add_model_options(traj, traj_b);
  traj_b.add<std::size_t>(traj, "-N,--trajectories", "number of trajectories",
                          [](auto& s, std::size_t v) { s.trajectories = v; });
  traj_b.add<std::uint64_t>(traj, "--seed", "seed", [](auto& s, std::uint64_t v) { s.seed = v; });
  traj_b.add<std::string>(traj, "--dump", "write trajectory events as CSV",
                          [](auto& s, const auto& v) { s.dump = v; });
  traj_b.add<std::size_t>(traj, "--dump-count", "trajectories in the dump",
                          [](auto& s, std::size_t v) { s.dump_count = v; });

  CLI::App* classical = app.add_subcommand("verify-classical", "classical-limit identities");
  classical_b.add<std::uint64_t>(classical, "--seed", "seed", [](auto& s, std::uint64_t v) { s.seed = v; });
  classical_b.add<std::size_t>(classical, "--trials", "random chains",
                               [](auto& s, std::size_t v) { s.trials = v; });
  classical_b.add<int>(classical, "--dim", "states per chain", [](auto& s, int v) { s.chain_dim = v; });
  classical_b.add<double>(classical, "--tau", "observation time", [](auto& s, double v) { s.tau = v; });
  classical_b.add<std::string>(classical, "--chain", "JSON file {\"rates\": [[...]]}",
                               [](auto& s, const auto& v) { s.chain = v; });
  classical_b.add<std::string>(classical, "--output,-o", "output file (default stdout)",
                               [](auto& s, const auto& v) { s.output = v; });

  CLI11_PARSE(app, argc, argv);

  qtb::RunSpec spec;
  if (classical->parsed()) spec.tau = 100.0;  // long-time regime of the classical identities
  if (!config.empty()) {
    std::ifstream in(config);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      qtb::apply_config(spec, ss.str());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  auto finish = [&](Binder& b, auto cmd) {
    for (auto& f : b.apply) f(spec);
    return run(cmd, spec);
  };
  if (sweep->parsed()) return finish(sweep_b, qtb::cmd_sweep);
  if (bounds->parsed()) return finish(bounds_b, qtb::cmd_bounds);
  if (traj->parsed()) return finish(traj_b, qtb::cmd_traj);
  if (classical->parsed()) return finish(classical_b, qtb::cmd_verify_classical);
  return 2;
}
