#pragma once

// Load-incremental solvers: the mixed nonlinear substructuring method, the
// Newton-Krylov-Schur baseline and a sequential monolithic Newton reference.

#include "mixdd/impedance.hpp"
#include "mixdd/linsolve.hpp"
#include "mixdd/partition.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace mixdd {

struct Thresholds {
  /// Global criterion: residual / F_ref + jump / U_ref.
  double global = 1e-6;
  /// Local Newton tolerances relative to F_ref, first and later global iterations.
  double local_first = 1e-4;
  double local = 1e-8;
  /// Relative Krylov residual.
  double krylov = 1e-8;
  int max_global = 50;
  int max_local = 25;
  /// Backtracking on the global criterion along each global step.
  bool line_search = true;

  /// Throws ConfigError unless all values are positive and local <= local_first.
  void validate() const;
};

/// Factors applied to the imposed displacement pattern, one per increment.
struct LoadProgram {
  std::vector<double> factors;

  /// Throws ConfigError unless non-empty, positive and strictly increasing.
  void validate() const;
};

enum class TangentSolver { Bdd, Feti2lm };

TangentSolver parse_tangent_solver(const std::string& name);
std::string to_string(TangentSolver solver);

struct SolverOptions {
  ImpedanceKind impedance = ImpedanceKind::TwoScale;
  Thresholds thresholds;
  bool srks = false;
  double srks_theta = 1e-3;
  int srks_capacity = 150;
  TangentSolver tangent_solver = TangentSolver::Bdd;
  /// Mixed method: the first iteration of an increment solves the local
  /// problems linearized at the converged state instead of nonlinearly.
  bool linear_predictor = true;
  /// Receives one line per global iteration (run log); may be empty.
  std::function<void(const std::string&)> log;
};

struct IncrementReport {
  double load_factor = 0.0;
  int global_iterations = 0;
  int krylov_iterations = 0;
  int cumulated_krylov = 0;
  int cumulated_global = 0;
  /// Global criterion at every global iteration, the last one converged.
  std::vector<double> criterion;
  /// Krylov iterations of every tangent solve.
  std::vector<int> krylov_per_iteration;
  /// Local Newton iterations per global iteration and subdomain (mixed only).
  std::vector<std::vector<int>> local_iterations;
  /// Full nodal displacement of the converged increment.
  Vec displacement;
};

struct SolveReport {
  std::string method;
  std::vector<IncrementReport> increments;

  int cumulated_krylov() const { return increments.empty() ? 0 : increments.back().cumulated_krylov; }
  int cumulated_global() const { return increments.empty() ? 0 : increments.back().cumulated_global; }
};

/// A run that stopped early; `report` holds the converged increments.
class SolveFailure : public Error {
public:
  SolveFailure(const std::string& what, SolveReport report)
      : Error(what), report(std::move(report)) {}
  SolveReport report;
};

struct GlobalResidual {
  /// sqrt(sum_s |f_int + f_ext + t^T lambda|^2 + |sum_s A lambda|^2).
  double residual = 0.0;
  /// Scaled jump norm of the traces.
  double jump = 0.0;
};

/// Convergence measures of a mixed state. `f_int` are the subdomain internal
/// forces at `u` (free dofs).
GlobalResidual global_residual(const Partition& partition, std::span<const Vec> u,
                               std::span<const Vec> f_int, std::span<const Vec> lambda,
                               double load_factor);

/// Force and displacement scales of an increment: the norm of the load
/// (external force plus the elastic force -K lift of the Dirichlet lift on the
/// virgin structure) on free dofs and the norm of the lift. Zero scales become 1.
struct ReferenceScales {
  double force = 1.0;
  double displacement = 1.0;
};
ReferenceScales reference_scales(const Mesh& mesh, double load_factor);

/// Interface impedances of every subdomain at the tangents `K` (free dofs)
/// and residuals f_int + f_ext. `bdd` provides the coarse data for the
/// two-scale impedance. Subdomains without neighbors get an empty impedance.
std::vector<Impedance> build_impedances(ImpedanceKind kind, const Partition& partition,
                                        std::span<const SpMat> K, std::span<const Vec> residuals,
                                        const ScaledAssembly& scaled, const BddOperator& bdd);

/// FETI-2LM solve of the linear problem of the structure at rest (tangents of
/// the virgin state) from mu = 0, to the relative residual `tolerance`.
/// Returns the Krylov report of the interface solve.
KrylovReport linear_feti2lm(const Partition& partition, ImpedanceKind kind, double load_factor,
                            double tolerance);

/// Mixed nonlinear substructuring over the load program.
SolveReport run_mixed(const Mesh& mesh, const Partition& partition,
                      const LoadProgram& program, const SolverOptions& options);

/// Global Newton with BDD tangent solves and linear local condensation.
SolveReport run_nks(const Mesh& mesh, const Partition& partition,
                    const LoadProgram& program, const SolverOptions& options);

/// Sequential Newton on the unpartitioned mesh (reference solution).
SolveReport run_monolithic(const Mesh& mesh, const LoadProgram& program,
                           const Thresholds& thresholds);

} // namespace mixdd
