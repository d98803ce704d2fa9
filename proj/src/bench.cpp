#include "mixdd/bench.hpp"

#include <cmath>
#include <sstream>

namespace mixdd {

namespace {

// Counters of a run at increment i, absent when it did not get there.
std::optional<std::pair<int, int>> counters(const StrategyRun& run, std::size_t i) {
  if (i >= run.report.increments.size()) return std::nullopt;
  const auto& inc = run.report.increments[i];
  return std::make_pair(inc.cumulated_krylov, inc.cumulated_global);
}

std::string cell(const std::optional<int>& v) { return v ? std::to_string(*v) : "x"; }

StrategyRun guarded(const std::string& strategy, const std::function<SolveReport()>& run) {
  StrategyRun out;
  out.strategy = strategy;
  try {
    out.report = run();
  } catch (const SolveFailure& e) {
    out.report = e.report;
    out.error = e.what();
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

} // namespace

std::string ResultTable::csv() const {
  std::ostringstream out;
  out << "increment,strategy,cumulated_krylov,cumulated_global_newton\n";
  for (std::size_t i = 0; i < loads.size(); ++i)
    for (const auto& run : runs) {
      const auto c = counters(run, i);
      out << i + 1 << ',' << run.strategy << ','
          << cell(c ? std::optional<int>(c->first) : std::nullopt) << ','
          << cell(c ? std::optional<int>(c->second) : std::nullopt) << '\n';
    }
  return out.str();
}

const StrategyRun* ResultTable::find(const std::string& strategy) const {
  for (const auto& run : runs)
    if (run.strategy == strategy) return &run;
  return nullptr;
}

int gain_percent(double a, double b) {
  if (!(b > 0.0)) throw ConfigError("gain against a zero count");
  return static_cast<int>(std::lround(100.0 * (1.0 - a / b)));
}

std::vector<Gain> gains(const ResultTable& table, const std::string& reference) {
  const StrategyRun* ref = table.find(reference);
  if (!ref) throw ConfigError("gains: no strategy '" + reference + "' in the table");
  if (table.loads.empty()) return {};
  const std::size_t last = table.loads.size() - 1;
  const auto r = counters(*ref, last);
  std::vector<Gain> out;
  for (const auto& run : table.runs) {
    if (run.strategy == reference) continue;
    Gain g;
    g.strategy = run.strategy;
    const auto c = counters(run, last);
    if (r && c && c->first > 0) g.krylov = gain_percent(r->first, c->first);
    if (r && c && c->second > 0) g.global = gain_percent(r->second, c->second);
    out.push_back(g);
  }
  return out;
}

std::string gains_csv(const std::vector<Gain>& gains, const std::string& reference) {
  std::ostringstream out;
  out << "strategy,reference,krylov_gain_percent,global_gain_percent\n";
  for (const auto& g : gains)
    out << g.strategy << ',' << reference << ',' << cell(g.krylov) << ',' << cell(g.global) << '\n';
  return out.str();
}

ResultTable run_bench(const Mesh& mesh, const Partition& partition, const LoadProgram& program,
                      const SolverOptions& options, std::span<const ImpedanceKind> impedances,
                      bool nks) {
  program.validate();
  ResultTable table;
  table.loads = program.factors;
  for (const auto kind : impedances) {
    SolverOptions o = options;
    o.impedance = kind;
    table.runs.push_back(guarded(to_string(kind), [&] { return run_mixed(mesh, partition, program, o); }));
  }
  if (nks)
    table.runs.push_back(guarded("nks", [&] { return run_nks(mesh, partition, program, options); }));
  return table;
}

std::string LinbenchTable::csv() const {
  std::ostringstream out;
  out << "subdomains,strategy,feti2lm_iterations\n";
  for (const auto& row : rows) out << row.subdomains << ',' << row.strategy << ',' << cell(row.iterations) << '\n';
  return out.str();
}

std::optional<int> LinbenchTable::iterations(int subdomains, ImpedanceKind kind) const {
  for (const auto& row : rows)
    if (row.subdomains == subdomains && row.strategy == to_string(kind)) return row.iterations;
  return std::nullopt;
}

LinbenchTable run_linbench(const CaseSpec& spec, std::span<const int> subdomains,
                           std::span<const ImpedanceKind> impedances, double displacement,
                           double tolerance) {
  CaseSpec elastic = spec;
  elastic.elastic = true;
  const auto generated = generate_case(elastic);
  LinbenchTable table;
  for (const int ns : subdomains) {
    if (ns < 1) throw ConfigError("linbench: subdomain counts must be >= 1");
    const Partition part = partition_mesh(generated.mesh, ExplicitStrategy{case_owners(generated, SlabStrategy{ns})});
    for (const auto kind : impedances) {
      LinbenchRow row;
      row.subdomains = ns;
      row.strategy = to_string(kind);
      try {
        row.iterations = linear_feti2lm(part, kind, displacement, tolerance).iterations;
      } catch (const Error& e) {
        row.error = e.what();
      }
      table.rows.push_back(row);
    }
  }
  return table;
}

} // namespace mixdd
