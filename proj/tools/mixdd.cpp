// Command-line entry point: case generation, single solves and strategy
// comparisons. Every subcommand writes its files into --out.

#include "mixdd/bench.hpp"
#include "mixdd/cases.hpp"
#include "mixdd/mesh_io.hpp"
#include "mixdd/parallel.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace mixdd;

namespace {

struct Common {
  std::string config;
  std::string out = ".";
  std::optional<unsigned> seed;
};

RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : read_config(c.config);
  if (c.seed) cfg.case_spec.seed = *c.seed;
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

std::vector<int> owners(const RunConfig& cfg, const GeneratedCase& generated) {
  if (cfg.partition) return case_owners(generated, *cfg.partition);
  if (generated.element_owner.empty())
    throw ConfigError("custom case needs a partition file or a partition section");
  return generated.element_owner;
}

// Criterion of every global iteration, numbered across increments.
std::string convergence_data(const SolveReport& report) {
  std::string out = "# global_iteration criterion\n";
  int k = 0;
  char buf[64];
  for (const auto& inc : report.increments)
    for (double c : inc.criterion) {
      std::snprintf(buf, sizeof buf, "%d %.6e\n", k++, c);
      out += buf;
    }
  return out;
}

struct Setup {
  GeneratedCase generated;
  Partition partition;
  LoadProgram program;
};

Setup prepare(const RunConfig& cfg) {
  Setup s;
  s.generated = generate_case(cfg.case_spec);
  s.partition = partition_mesh(s.generated.mesh, ExplicitStrategy{owners(cfg, s.generated)});
  s.program = cfg.program ? *cfg.program : s.generated.program;
  std::fprintf(stderr, "case %s: %d nodes, %d elements, %d subdomains, %zu increments\n",
               s.generated.kind.c_str(), s.generated.mesh.num_nodes(), s.generated.mesh.num_elements(),
               s.partition.num_subdomains(), s.program.factors.size());
  return s;
}

// Appends run log lines to a file, each prefixed by nothing (the solver
// lines carry the strategy and increment).
class RunLog {
public:
  explicit RunLog(const fs::path& path) : f_(path, std::ios::binary) {
    if (!f_) throw ConfigError("cannot write " + path.string());
  }
  std::function<void(const std::string&)> sink() {
    return [this](const std::string& line) { f_ << line << '\n'; };
  }
  void note(const std::string& line) { f_ << line << '\n'; }

private:
  std::ofstream f_;
};

void report_runs(const ResultTable& table, RunLog& log) {
  for (const auto& run : table.runs) {
    if (run.failed()) {
      log.note(run.strategy + " failed: " + run.error);
      std::fprintf(stderr, "%s: failed after %zu increments: %s\n", run.strategy.c_str(),
                   run.report.increments.size(), run.error.c_str());
    } else {
      std::fprintf(stderr, "%s: cumulated krylov %d, global newton %d\n", run.strategy.c_str(),
                   run.report.cumulated_krylov(), run.report.cumulated_global());
    }
  }
}

int gen_case(const Common& c) {
  const RunConfig cfg = load(c);
  const auto generated = generate_case(cfg.case_spec);
  const fs::path dir = out_dir(c);
  write_mesh(dir / "mesh.json", generated.mesh);
  write_partition(dir / "partition.json", owners(cfg, generated));
  std::fprintf(stderr, "wrote %s and %s (%d nodes, %d elements)\n", (dir / "mesh.json").c_str(),
               (dir / "partition.json").c_str(), generated.mesh.num_nodes(), generated.mesh.num_elements());
  return 0;
}

int solve(const Common& c, const std::string& impedance, bool srks) {
  RunConfig cfg = load(c);
  if (srks) cfg.solver.srks = true;
  const bool nks = impedance == "nks";
  if (!impedance.empty() && !nks) cfg.solver.impedance = parse_impedance(impedance);
  const Setup s = prepare(cfg);
  const fs::path dir = out_dir(c);
  RunLog log(dir / "run.log");
  cfg.solver.log = log.sink();
  const std::vector<ImpedanceKind> kinds = nks ? std::vector<ImpedanceKind>{}
                                               : std::vector<ImpedanceKind>{cfg.solver.impedance};
  const auto table = run_bench(s.generated.mesh, s.partition, s.program, cfg.solver, kinds, nks);
  report_runs(table, log);
  write_text(dir / "results.csv", table.csv());
  const auto& run = table.runs.front();
  write_text(dir / (run.strategy + "_convergence.dat"), convergence_data(run.report));
  return run.failed() ? 2 : 0;
}

int bench(const Common& c, bool srks) {
  RunConfig cfg = load(c);
  if (srks) cfg.solver.srks = true;
  const Setup s = prepare(cfg);
  const fs::path dir = out_dir(c);
  RunLog log(dir / "run.log");
  cfg.solver.log = log.sink();
  const auto table = run_bench(s.generated.mesh, s.partition, s.program, cfg.solver, cfg.bench_impedances,
                               cfg.bench_nks);
  report_runs(table, log);
  write_text(dir / "results.csv", table.csv());
  for (const auto& run : table.runs)
    write_text(dir / (run.strategy + "_convergence.dat"), convergence_data(run.report));
  const std::string reference = to_string(ImpedanceKind::TwoScale);
  if (table.find(reference) && table.runs.size() > 1)
    write_text(dir / "gains.csv", gains_csv(gains(table, reference), reference));
  bool failed = false;
  for (const auto& run : table.runs) failed = failed || run.failed();
  return failed ? 2 : 0;
}

int linbench(const Common& c) {
  const RunConfig cfg = load(c);
  const auto table = run_linbench(cfg.case_spec, cfg.linbench_subdomains, cfg.linbench_impedances,
                                  cfg.linbench_displacement, cfg.solver.thresholds.krylov);
  write_text(out_dir(c) / "linbench.csv", table.csv());
  std::cout << table.csv();
  bool failed = false;
  for (const auto& row : table.rows)
    if (!row.iterations) {
      failed = true;
      std::fprintf(stderr, "%d subdomains, %s: %s\n", row.subdomains, row.strategy.c_str(), row.error.c_str());
    }
  return failed ? 2 : 0;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "seed of the node jitter (overrides the config)");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed nonlinear substructuring with interface impedance comparisons"};
  app.require_subcommand(1);
  Common common;
  std::string impedance;
  bool srks = false;

  auto* gen = app.add_subcommand("gen-case", "write the mesh and partition files of a case");
  add_common(gen, common);
  auto* sol = app.add_subcommand("solve", "run one strategy over the load program");
  add_common(sol, common);
  sol->add_option("--impedance", impedance, "lumped, superlumped, two-scale, exact-complement or nks");
  sol->add_flag("--srks", srks, "reuse Ritz vectors across tangent solves");
  auto* ben = app.add_subcommand("bench", "compare impedances and the Newton-Krylov-Schur baseline");
  add_common(ben, common);
  ben->add_flag("--srks", srks, "reuse Ritz vectors across tangent solves");
  auto* lin = app.add_subcommand("linbench", "FETI-2LM iterations of the elastic problem");
  add_common(lin, common);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return gen_case(common);
    if (sol->parsed()) return solve(common, impedance, srks);
    if (ben->parsed()) return bench(common, srks);
    if (lin->parsed()) return linbench(common);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
