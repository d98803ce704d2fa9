#pragma once

// Local condensed operators: Schur complements, Dirichlet-to-Neumann
// evaluation, Robin factorizations and the local nonlinear Robin solve.

#include "mixdd/impedance.hpp"
#include "mixdd/partition.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace mixdd {

/// Tangent and internal force of a subdomain, restricted to its free dofs.
struct LocalTangent {
  Vec f_int;
  SpMat K;
  std::vector<GaussPointState> trial_states;
  /// -K_fd (lift(target) - lift(load_factor)) on the free dofs, when a target
  /// load factor is given: the linearized force of a Dirichlet increment.
  Vec lift_force;
};

LocalTangent local_tangent(const SubdomainSystem& sub, const Vec& u_free,
                           double load_factor,
                           std::optional<double> target = std::nullopt);

/// Internal force only, on the free dofs.
Vec local_internal_force(const SubdomainSystem& sub, const Vec& u_free, double load_factor);

/// Backtracking on a residual norm: halves t from 1 until `norm_at(t)` drops
/// below `norm0`, at most `max_halvings` times. Returns the step with the
/// smallest norm seen.
double backtrack(const std::function<double(double)>& norm_at, double norm0,
                 int max_halvings = 10);

/// S = K_bb - K_bi K_ii^-1 K_ib, applied through a factorization of K_ii.
class SchurOperator {
public:
  SchurOperator() = default;
  /// Throws FactorizationError if K_ii is singular.
  SchurOperator(const SpMat& K, std::span<const int> boundary,
                std::span<const int> interior);

  int size() const { return static_cast<int>(K_bb_.rows()); }
  Vec apply(const Vec& x_b) const;
  Mat dense() const;
  /// r_b - K_bi K_ii^-1 r_i for a vector on all free dofs.
  Vec condense(const Vec& r) const;
  /// Free vector with boundary x_b and interior K_ii^-1 (r_i - K_ib x_b).
  Vec expand(const Vec& x_b, const Vec& r) const;
  const SpMat& boundary_block() const { return K_bb_; }

private:
  std::vector<int> boundary_;
  std::vector<int> interior_;
  SpMat K_bb_, K_bi_, K_ib_;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> ii_;
};

/// Dense primal Schur complement of K on `boundary`.
Mat primal_schur(const SpMat& K, std::span<const int> boundary,
                 std::span<const int> interior);

struct NewtonOptions {
  double tolerance = 1e-8;
  int max_iterations = 25;
  /// Backtracking line search on the residual norm.
  bool line_search = true;
};

struct DirichletToNeumannResult {
  Vec u;
  Vec lambda_b;
  int iterations = 0;
  std::vector<double> history;
  std::vector<GaussPointState> trial_states;
};

/// Interior equilibrium with the trace u_b imposed; returns the boundary
/// reaction lambda_b = -(f_int + f_ext)_b. `u_guess` seeds the interior.
DirichletToNeumannResult dirichlet_to_neumann(const SubdomainSystem& sub, const Vec& u_b,
                                              double load_factor,
                                              const NewtonOptions& options = {},
                                              const Vec* u_guess = nullptr);

/// Factorization of K + t^T Q t. The low-rank part of Q is handled with the
/// Sherman-Morrison-Woodbury identity around K + t^T Q.sparse t.
class RobinFactorization {
public:
  RobinFactorization() = default;
  /// Throws ImpedanceError("impedance not admissible") when the correction
  /// block M - W^T (K + t^T Q.sparse t)^-1 W is not positive definite.
  RobinFactorization(const SpMat& K, std::span<const int> boundary, const Impedance& Q);

  int size() const { return n_; }
  Vec solve(const Vec& rhs) const;

private:
  int n_ = 0;
  std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
  Mat U_;      // t^T W
  Mat KinvU_;  // (K + t^T Q.sparse t)^-1 t^T W
  Eigen::LLT<Mat> correction_;
};

/// r = f_int + f_ext + t^T (mu_b - Q u_b - offset).
Vec robin_residual(const SubdomainSystem& sub, const Vec& f_int, double load_factor,
                   const Vec& mu_b, const Impedance& Q, const Vec& u_free,
                   const Vec* offset = nullptr);

struct RobinSolveResult {
  Vec u;
  Vec u_b;
  Vec lambda_b;
  int iterations = 0;
  std::vector<double> history;
  std::vector<GaussPointState> trial_states;
  /// Tangent and internal force at the returned u.
  SpMat K;
  Vec f_int;
};

/// Local Newton on f_int(u) + f_ext + t^T (mu_b - Q t u - offset) = 0 starting
/// from u0. lambda_b = mu_b - Q u_b - offset on exit. Throws DivergenceError
/// after options.max_iterations. With `from`, u0 is in equilibrium with the
/// Dirichlet values of that load factor and the first step linearizes the
/// increment to `load_factor`.
RobinSolveResult robin_nonlinear_solve(const SubdomainSystem& sub, const Vec& mu_b,
                                       const Impedance& Q, double load_factor,
                                       const Vec& u0, const NewtonOptions& options,
                                       const Vec* offset = nullptr,
                                       std::optional<double> from = std::nullopt);

/// One Newton step on the Robin problem linearized at `lt` (tangent and
/// internal force, possibly carrying a lift force). No step is taken when the
/// linearized residual is below `tolerance`. K and f_int of the result are
/// those of `lt`.
RobinSolveResult robin_predictor(const SubdomainSystem& sub, const Vec& mu_b, const Impedance& Q,
                                 double load_factor, const Vec& u0, const LocalTangent& lt,
                                 double tolerance);

/// Solves (A Q A^T) x = rhs on Gamma_A, dense.
class AssembledImpedance {
public:
  AssembledImpedance(const InterfaceTopology& topology, std::span<const Impedance> Q);
  Vec solve(const Vec& rhs) const;
  const Mat& matrix() const { return matrix_; }

private:
  Mat matrix_;
  Eigen::LLT<Mat> llt_;
};

struct CondensedRhs {
  std::vector<Vec> b_m;
  std::vector<Vec> b_p;
};

/// b_m = A^T (A Q A^T)^-1 A mu_b - u_b and b_p = (S + Q) b_m, with S applied
/// by `apply_S(s, x)`.
CondensedRhs condensed_rhs(const InterfaceTopology& topology,
                           const AssembledImpedance& aqa,
                           std::span<const Vec> u_b, std::span<const Vec> mu_b,
                           std::span<const Impedance> Q,
                           const std::function<Vec(int, const Vec&)>& apply_S);

} // namespace mixdd
