// Python bindings: case generation and the solve, bench and linbench runs,
// configured by the same JSON text as the command-line tool.

#include "mixdd/bench.hpp"
#include "mixdd/cases.hpp"
#include "mixdd/parallel.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace mixdd;

namespace {

struct Setup {
  GeneratedCase generated;
  Partition partition;
  LoadProgram program;
};

RunConfig configure(const std::string& config) {
  RunConfig cfg = parse_config(config);
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  return cfg;
}

std::vector<int> owners(const RunConfig& cfg, const GeneratedCase& generated) {
  if (cfg.partition) return case_owners(generated, *cfg.partition);
  if (generated.element_owner.empty())
    throw ConfigError("custom case needs a partition file or a partition section");
  return generated.element_owner;
}

Setup prepare(const RunConfig& cfg) {
  Setup s;
  s.generated = generate_case(cfg.case_spec);
  s.partition = partition_mesh(s.generated.mesh, ExplicitStrategy{owners(cfg, s.generated)});
  s.program = cfg.program ? *cfg.program : s.generated.program;
  return s;
}

py::array_t<double> to_numpy(const Vec& v) {
  py::array_t<double> out(v.size());
  std::copy(v.data(), v.data() + v.size(), out.mutable_data());
  return out;
}

py::dict run_dict(const StrategyRun& run) {
  py::list increments;
  for (const auto& inc : run.report.increments) {
    py::dict d;
    d["load_factor"] = inc.load_factor;
    d["global_iterations"] = inc.global_iterations;
    d["krylov_iterations"] = inc.krylov_iterations;
    d["cumulated_krylov"] = inc.cumulated_krylov;
    d["cumulated_global"] = inc.cumulated_global;
    d["criterion"] = inc.criterion;
    d["displacement"] = to_numpy(inc.displacement);
    increments.append(d);
  }
  py::dict out;
  out["strategy"] = run.strategy;
  out["error"] = run.error;
  out["increments"] = increments;
  return out;
}

py::dict table_dict(const ResultTable& table) {
  py::list runs;
  for (const auto& run : table.runs) runs.append(run_dict(run));
  py::dict out;
  out["csv"] = table.csv();
  out["runs"] = runs;
  return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mixed nonlinear substructuring with interface impedances";

  // Translators registered last are tried first: the subclass comes second.
  const auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());

  m.def(
      "generate_case",
      [](const std::string& config) {
        const RunConfig cfg = configure(config);
        const auto generated = generate_case(cfg.case_spec);
        py::array_t<double> nodes({generated.mesh.num_nodes(), 2});
        auto n = nodes.mutable_unchecked<2>();
        for (int i = 0; i < generated.mesh.num_nodes(); ++i)
          for (int c = 0; c < 2; ++c) n(i, c) = generated.mesh.nodes[static_cast<std::size_t>(i)][c];
        py::array_t<int> elements({generated.mesh.num_elements(), 3});
        auto e = elements.mutable_unchecked<2>();
        for (int i = 0; i < generated.mesh.num_elements(); ++i)
          for (int c = 0; c < 3; ++c) e(i, c) = generated.mesh.elements[static_cast<std::size_t>(i)][c];
        py::dict out;
        out["kind"] = generated.kind;
        out["nodes"] = nodes;
        out["elements"] = elements;
        out["element_material"] = generated.mesh.element_material;
        out["element_owner"] = owners(cfg, generated);
        out["load_factors"] = generated.program.factors;
        return out;
      },
      py::arg("config") = "{}", "Mesh, partition and load program of the configured case.");

  m.def(
      "solve",
      [](const std::string& config, const std::string& impedance, bool srks) {
        RunConfig cfg = configure(config);
        if (srks) cfg.solver.srks = true;
        const bool nks = impedance == "nks";
        std::vector<ImpedanceKind> kinds;
        if (!nks) kinds.push_back(impedance.empty() ? cfg.solver.impedance : parse_impedance(impedance));
        ResultTable table;
        {
          py::gil_scoped_release release;
          const Setup s = prepare(cfg);
          table = run_bench(s.generated.mesh, s.partition, s.program, cfg.solver, kinds, nks);
        }
        return table_dict(table);
      },
      py::arg("config") = "{}", py::arg("impedance") = "", py::arg("srks") = false,
      "One strategy (an impedance name or \"nks\") over the load program.");

  m.def(
      "bench",
      [](const std::string& config, bool srks) {
        RunConfig cfg = configure(config);
        if (srks) cfg.solver.srks = true;
        ResultTable table;
        {
          py::gil_scoped_release release;
          const Setup s = prepare(cfg);
          table = run_bench(s.generated.mesh, s.partition, s.program, cfg.solver, cfg.bench_impedances,
                            cfg.bench_nks);
        }
        py::dict out = table_dict(table);
        const std::string reference = to_string(ImpedanceKind::TwoScale);
        if (table.find(reference) && table.runs.size() > 1)
          out["gains_csv"] = gains_csv(gains(table, reference), reference);
        return out;
      },
      py::arg("config") = "{}", py::arg("srks") = false, "Every configured strategy on the same case.");

  m.def(
      "linbench",
      [](const std::string& config) {
        const RunConfig cfg = configure(config);
        py::gil_scoped_release release;
        return run_linbench(cfg.case_spec, cfg.linbench_subdomains, cfg.linbench_impedances,
                            cfg.linbench_displacement, cfg.solver.thresholds.krylov)
            .csv();
      },
      py::arg("config") = "{}", "FETI-2LM iterations of the elastic problem, as CSV text.");

  m.def("gain_percent", &gain_percent, py::arg("a"), py::arg("b"), "round(100 (1 - a / b))");
}
