#include <sstream>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qtb/bounds.hpp"
#include "qtb/commands.hpp"
#include "qtb/statistics.hpp"
#include "qtb/trajectories.hpp"

namespace py = pybind11;
using namespace qtb;

namespace {

using Counting = std::vector<double>;  // weights in channel order

CountingVector counting(const LiouvillianBundle& b, const Counting& c) {
  if (c.size() != b.system.num_channels()) {
    throw Error("counting vector has " + std::to_string(c.size()) + " entries but the model has " +
                std::to_string(b.system.num_channels()) + " channels");
  }
  return CountingVector::from_ordered(b.system, c);
}

Propagators props(const LiouvillianBundle& b, double tau) {
  return integrated_propagators(b.generator.entries, tau);
}

OpenSystem make_system(const Matrix& h, const std::vector<std::pair<int, Matrix>>& jumps,
                       const std::optional<std::vector<std::tuple<int, int, double>>>& pairing) {
  std::vector<JumpOperator> js;
  for (const auto& [id, l] : jumps) js.emplace_back(id, l);
  std::optional<DetailedBalancePairing> p;
  if (pairing) {
    std::vector<PairEntry> entries;
    for (const auto& [k, ks, ds] : *pairing) entries.push_back({k, ks, ds});
    p = DetailedBalancePairing(std::move(entries));
  }
  return OpenSystem(HermitianOperator(h), std::move(js), std::move(p));
}

using Command = int (*)(const RunSpec&, std::ostream&, std::ostream&);

py::tuple run_command(Command cmd, const std::string& config) {
  RunSpec spec;
  apply_config(spec, config);
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = cmd(spec, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Uncertainty bounds for Markovian open quantum systems";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<MaserParams>(m, "MaserParams")
      .def(py::init([](double gamma_h, double gamma_c, double n_h, double n_c, double omega, double delta) {
             return MaserParams{gamma_h, gamma_c, n_h, n_c, omega, delta};
           }),
           py::kw_only(), py::arg("gamma_h") = 0.1, py::arg("gamma_c") = 2.0, py::arg("n_h") = 5.0,
           py::arg("n_c") = 0.02, py::arg("omega") = 0.15, py::arg("delta") = 0.0)
      .def_readwrite("gamma_h", &MaserParams::gamma_h)
      .def_readwrite("gamma_c", &MaserParams::gamma_c)
      .def_readwrite("n_h", &MaserParams::n_h)
      .def_readwrite("n_c", &MaserParams::n_c)
      .def_readwrite("omega", &MaserParams::omega)
      .def_readwrite("delta", &MaserParams::delta);

  py::class_<OpenSystem>(m, "OpenSystem")
      .def(py::init(&make_system), py::arg("hamiltonian"), py::arg("jumps"), py::arg("pairing") = py::none(),
           "jumps: [(id, L)], pairing: [(k, k_star, ds)]")
      .def_property_readonly("dim", &OpenSystem::dim)
      .def_property_readonly("hamiltonian", [](const OpenSystem& s) { return s.hamiltonian().matrix(); })
      .def_property_readonly("jumps",
                             [](const OpenSystem& s) {
                               std::vector<std::pair<int, Matrix>> out;
                               for (const auto& j : s.jumps()) out.emplace_back(j.channel_id, j.entries);
                               return out;
                             })
      .def_property_readonly("channel_ids", &OpenSystem::channel_ids)
      .def_property_readonly("has_pairing", [](const OpenSystem& s) { return s.pairing().has_value(); })
      .def("validation_notes", [](const OpenSystem& s) { return validate_system(s).notes; })
      .def("to_json", &serialize_model)
      .def_static("from_json", &parse_model)
      .def_static("load", &load_model);

  m.def("build_maser", [](const MaserParams& p) { return build_maser(p); }, py::arg("params") = MaserParams{});
  m.def("cycle_current", [] { return maser_cycle_current().aligned(build_maser(MaserParams{})); },
        "Maser cycle counting weights in channel order.");
  m.def(
      "embed_classical",
      [](const RealMatrix& rates, bool with_pairing) {
        return embed_classical(ClassicalChain{rates, std::nullopt}, with_pairing);
      },
      py::arg("rates"), py::arg("with_pairing") = true, "rates[m, n] is the rate of n -> m.");
  m.def(
      "random_chain", [](Eigen::Index dim, std::uint64_t seed) { return random_chain(dim, seed).rates; },
      py::arg("dim"), py::arg("seed"));
  m.def("phi_inverse", &phi_inverse, py::arg("y"));
  m.def("tkur_lower_bound", &tkur_lower_bound, py::arg("sigma"), py::arg("activity"));

  py::class_<BoundReport>(m, "BoundReport")
      .def_property_readonly("name", [](const BoundReport& r) { return to_string(r.name); })
      .def_readonly("label", &BoundReport::label)
      .def_readonly("upper_bound", &BoundReport::upper_bound)
      .def_readonly("lhs", &BoundReport::lhs)
      .def_readonly("rhs", &BoundReport::rhs)
      .def_readonly("slack", &BoundReport::slack)
      .def_readonly("applicable", &BoundReport::applicable)
      .def_readonly("informational", &BoundReport::informational)
      .def_readonly("note", &BoundReport::note)
      .def_readonly("components", &BoundReport::components)
      .def_property_readonly("satisfied", &BoundReport::satisfied)
      .def("__repr__", [](const BoundReport& r) {
        return "<BoundReport " + r.label + (r.satisfied() ? " satisfied>" : " violated>");
      });

  py::class_<LiouvillianBundle>(m, "Bundle")
      .def(py::init<OpenSystem>(), py::arg("system"))
      .def_readonly("system", &LiouvillianBundle::system)
      .def_property_readonly("stationary_state", [](const LiouvillianBundle& b) { return b.pi.matrix(); })
      .def_property_readonly("generator", [](const LiouvillianBundle& b) { return b.generator.entries; })
      .def_property_readonly("adjoint", [](const LiouvillianBundle& b) { return b.adjoint.entries; })
      .def_readonly("spectral_gap", &LiouvillianBundle::spectral_gap_real)
      .def_property_readonly("traffic", [](const LiouvillianBundle& b) { return channel_traffic(b).traffic; })
      .def_property_readonly("activity", [](const LiouvillianBundle& b) { return channel_traffic(b).activity; })
      .def_property_readonly("entropy_production", &entropy_production_rate)
      .def(
          "mean", [](const LiouvillianBundle& b, const Counting& c, double tau) {
            return mean_observable(b, counting(b, c), tau);
          },
          py::arg("counting"), py::arg("tau"))
      .def(
          "variance", [](const LiouvillianBundle& b, const Counting& c, double tau) {
            return variance_exact(b, counting(b, c), tau);
          },
          py::arg("counting"), py::arg("tau"))
      .def(
          "fcs_moments",
          [](const LiouvillianBundle& b, const Counting& c, double tau) {
            const auto s = stats_fcs(b, counting(b, c), tau);
            return py::make_tuple(s.mean, s.variance);
          },
          py::arg("counting"), py::arg("tau"), "Mean and variance from the counting-field derivatives.")
      .def(
          "delta",
          [](const LiouvillianBundle& b, const Counting& c, double tau, const std::string& mode) {
            if (mode != "finite" && mode != "asymptotic") throw Error("mode must be 'finite' or 'asymptotic'");
            return delta_phi(b, counting(b, c), mode == "finite" ? DeltaMode::finite : DeltaMode::asymptotic,
                             tau);
          },
          py::arg("counting"), py::arg("tau"), py::arg("mode") = "finite")
      .def(
          "tkur",
          [](const LiouvillianBundle& b, const Counting& c, double tau, const std::string& mode,
             std::optional<double> delta_override) {
            TkurOptions opt;
            if (mode != "finite" && mode != "asymptotic") throw Error("mode must be 'finite' or 'asymptotic'");
            opt.mode = mode == "finite" ? DeltaMode::finite : DeltaMode::asymptotic;
            opt.delta_override = delta_override;
            return check_tkur(b, counting(b, c), props(b, tau), opt);
          },
          py::arg("counting"), py::arg("tau"), py::arg("mode") = "finite", py::arg("delta_override") = py::none())
      .def(
          "iur", [](const LiouvillianBundle& b, const Counting& c, double tau, double s) {
            return check_iur(b, counting(b, c), props(b, tau), s);
          },
          py::arg("counting"), py::arg("tau"), py::arg("s") = 0.5)
      .def(
          "rkur",
          [](const LiouvillianBundle& b, const Counting& c, double tau) {
            const Propagators p = props(b, tau);
            return check_rkur(b, counting(b, c), p, ResponseKernel(b, p));
          },
          py::arg("counting"), py::arg("tau"))
      .def(
          "response_gradient", [](const LiouvillianBundle& b, const Counting& c, double tau) {
            return response_gradient(b, counting(b, c), props(b, tau));
          },
          py::arg("counting"), py::arg("tau"))
      .def(
          "symmetrized_gap", [](const LiouvillianBundle& b, double s) { return symmetrized_gap(b, s).gap; },
          py::arg("s"))
      .def(
          "monte_carlo",
          [](const LiouvillianBundle& b, const Counting& c, double tau, std::size_t n, std::uint64_t seed,
             unsigned threads) {
            EnsembleOptions opt;
            opt.threads = threads;
            EnsembleEstimate est;
            {
              py::gil_scoped_release release;
              est = estimate_moments(b, counting(b, c), tau, n, seed, opt);
            }
            py::dict d;
            d["mean"] = est.mean;
            d["variance"] = est.variance;
            d["mean_se"] = est.mean_se;
            d["variance_se"] = est.variance_se;
            d["channel_counts"] = est.channel_counts;
            d["samples"] = est.samples;
            return d;
          },
          py::arg("counting"), py::arg("tau"), py::arg("n"), py::arg("seed"), py::arg("threads") = 0);

  m.def(
      "sweep", [](const std::string& config) { return run_command(cmd_sweep, config); },
      py::arg("config") = "{}", "Runs the sweep command on a JSON config; returns (exit code, csv, stderr).");
  m.def(
      "bounds", [](const std::string& config) { return run_command(cmd_bounds, config); },
      py::arg("config") = "{}", "Runs the bounds command on a JSON config; returns (exit code, json, stderr).");
  m.def(
      "traj", [](const std::string& config) { return run_command(cmd_traj, config); }, py::arg("config") = "{}");
}
