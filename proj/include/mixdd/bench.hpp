#pragma once

// Strategy comparisons: cumulated iteration tables of the nonlinear runs and
// FETI-2LM iteration counts of the linear problem.

#include "mixdd/cases.hpp"
#include "mixdd/driver.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mixdd {

/// One strategy of a comparison. `report` holds the converged increments;
/// `error` is empty when the whole load program converged.
struct StrategyRun {
  std::string strategy;
  SolveReport report;
  std::string error;

  bool failed() const { return !error.empty(); }
};

/// Cumulated counters per increment and strategy. Increments a strategy did
/// not converge are printed as "x".
struct ResultTable {
  std::vector<double> loads;
  std::vector<StrategyRun> runs;

  /// Header increment,strategy,cumulated_krylov,cumulated_global_newton;
  /// rows by increment (1-based), then by strategy in run order.
  std::string csv() const;
  const StrategyRun* find(const std::string& strategy) const;
};

/// round(100 (1 - a / b)), the gain of a over b in percent.
int gain_percent(double a, double b);

/// Gains of `reference` over every other strategy at the final increment.
struct Gain {
  std::string strategy;
  std::optional<int> krylov;
  std::optional<int> global;
};
std::vector<Gain> gains(const ResultTable& table, const std::string& reference);

/// Header strategy,reference,krylov_gain_percent,global_gain_percent.
std::string gains_csv(const std::vector<Gain>& gains, const std::string& reference);

/// One run_mixed per impedance, then run_nks when `nks` is set, all on the
/// same mesh, partition and options.
ResultTable run_bench(const Mesh& mesh, const Partition& partition, const LoadProgram& program,
                      const SolverOptions& options, std::span<const ImpedanceKind> impedances,
                      bool nks);

struct LinbenchRow {
  int subdomains = 0;
  std::string strategy;
  std::optional<int> iterations;
  std::string error;
};

struct LinbenchTable {
  std::vector<LinbenchRow> rows;

  /// Header subdomains,strategy,feti2lm_iterations.
  std::string csv() const;
  std::optional<int> iterations(int subdomains, ImpedanceKind kind) const;
};

/// FETI-2LM iterations of the case with every material elastic, slab
/// partitions of each size and imposed displacement `displacement`.
LinbenchTable run_linbench(const CaseSpec& spec, std::span<const int> subdomains,
                           std::span<const ImpedanceKind> impedances, double displacement,
                           double tolerance = 1e-8);

} // namespace mixdd
