#pragma once

// Interface solvers: projected preconditioned conjugate gradient (BDD) with a
// rigid body coarse space and optional Ritz augmentation, FETI-2LM by GMRES,
// the Robin-Robin stationary iteration and Ritz extraction.

#include "mixdd/impedance.hpp"
#include "mixdd/partition.hpp"
#include "mixdd/schur.hpp"

#include <functional>
#include <optional>

namespace mixdd {

using LinearOperator = std::function<Vec(const Vec&)>;

struct KrylovOptions {
  /// Relative residual target.
  double tolerance = 1e-8;
  /// Iteration cap; negative means the system size.
  int max_iterations = -1;
  /// Keep the Lanczos data needed for Ritz extraction.
  bool keep_lanczos = false;
  /// Stagnation window for GMRES.
  int stagnation_window = 50;
  /// Called with the initial guess and every CG iterate (tests, diagnostics).
  std::function<void(const Vec&)> observer;
};

struct KrylovReport {
  int iterations = 0;
  /// Residual norm of every iterate, starting with the initial guess.
  std::vector<double> residuals;
  double relative_residual = 0.0;
  /// ||Z^T r|| of every iterate (projected CG only).
  std::vector<double> coarse_residuals;
  /// Conjugate gradient coefficients and normalized Lanczos vectors.
  std::vector<double> alphas;
  std::vector<double> betas;
  Mat lanczos;
  /// Augmentation vectors dropped as numerically dependent.
  int pruned = 0;
};

/// Deflation space Z with its Galerkin matrix Z^T S Z.
class Deflation {
public:
  Deflation() = default;
  /// Throws FactorizationError if Z^T S Z is not positive definite.
  Deflation(Mat Z, const LinearOperator& op);

  int size() const { return static_cast<int>(Z_.cols()); }
  const Mat& basis() const { return Z_; }
  const Mat& operator_basis() const { return SZ_; }
  const Mat& galerkin() const { return C_; }
  /// (Z^T S Z)^-1 y.
  Vec solve(const Vec& y) const;
  Mat inverse() const;
  /// Z (Z^T S Z)^-1 Z^T b.
  Vec coarse_correction(const Vec& b) const;
  /// x - Z (Z^T S Z)^-1 (S Z)^T x, S-orthogonal to Z.
  Vec project(const Vec& x) const;

private:
  Mat Z_, SZ_, C_;
  Eigen::LLT<Mat> llt_;
};

/// Projected preconditioned CG on S x = b: x0 is the coarse solution and the
/// search directions stay S-orthogonal to the deflation space.
Vec projected_pcg(const LinearOperator& op, const LinearOperator& preconditioner,
                  const Deflation* deflation, const Vec& b, const KrylovOptions& options,
                  KrylovReport& report);

/// Balancing Neumann-Neumann data of the primal interface problem
/// S_A = sum_s A S A^T at one tangent state.
class BddOperator {
public:
  BddOperator() = default;
  BddOperator(const InterfaceTopology& topology, std::vector<Mat> schur,
              const ScaledAssembly& scaled, std::span<const RigidBodyModes> modes);

  int size() const { return topology_ ? topology_->n_A : 0; }
  Vec apply(const Vec& x) const;
  /// sum_s A D S^+ D A^T r, D the stiffness weights.
  Vec precondition(const Vec& r) const;
  Mat dense() const;

  const Mat& schur(int s) const { return schur_[static_cast<std::size_t>(s)]; }
  const std::vector<Mat>& schur() const { return schur_; }
  /// Scaled rigid traces on Gamma_A and the owner of each column.
  const Mat& coarse_basis() const { return G_; }
  const std::vector<int>& column_owner() const { return owner_; }
  const Deflation& coarse() const { return coarse_; }
  LinearOperator as_operator() const;
  LinearOperator as_preconditioner() const;

private:
  const InterfaceTopology* topology_ = nullptr;
  std::vector<Mat> schur_;
  std::vector<Mat> pinv_;
  std::vector<Vec> weights_;
  Mat G_;
  std::vector<int> owner_;
  Deflation coarse_;
};

/// Ritz vectors kept across solves, S-orthonormal for the operator of the
/// solve they were taken from.
struct RitzStore {
  Mat vectors;
  std::vector<double> values;
  double theta = 1e-3;
  int capacity = 150;

  int size() const { return static_cast<int>(vectors.cols()); }
};

/// Ritz pairs of the preconditioned projected operator from the CG
/// tridiagonal matrix; pairs with residual estimate below theta |value| are
/// appended to `store`, which is then S-orthonormalized and capped (oldest
/// vectors evicted first). Returns the number of selected pairs.
int srks_extract(const KrylovReport& report, const LinearOperator& op, RitzStore& store);

/// Ritz values and vectors of a CG run (all of them, unselected), with the
/// residual estimate of each pair.
struct RitzPairs {
  Vec values;
  Mat vectors;
  Vec residuals;
};
RitzPairs ritz_pairs(const KrylovReport& report);

/// Coarse space [G, W'] with W' the store S-orthogonalized against G and
/// S-orthonormalized; dependent columns are dropped and counted.
Deflation srks_augment(const BddOperator& bdd, const RitzStore& store, int* pruned = nullptr);

/// BDD solve of S_A dv = rhs, optionally augmented with a Ritz store.
/// Throws KrylovError on the iteration cap or a preconditioner breakdown.
Vec bdd_solve(const BddOperator& bdd, const Vec& rhs, const KrylovOptions& options,
              KrylovReport& report, const RitzStore* store = nullptr);

struct RecoveredFields {
  std::vector<Vec> dmu;
  std::vector<Vec> du;
  std::vector<Vec> du_b;
  std::vector<Vec> dlambda;
};

/// dmu = (S + Q)(b_m - A^T dv), du = (K + t^T Q t)^-1 t^T dmu, du_b = t du,
/// dlambda = dmu - Q du_b.
RecoveredFields recover_fields(const Vec& dv, std::span<const Vec> b_m,
                               std::span<const SubdomainSystem> subdomains,
                               const InterfaceTopology& topology,
                               std::span<const Mat> schur, std::span<const Impedance> Q,
                               std::span<const RobinFactorization> factors);

/// Robin exchange of the two-Lagrange-multiplier method: for every subdomain
/// mu_s = Q_s ubar - lambda_bar with ubar the mean trace of the other
/// subdomains and lambda_bar the sum of their reactions.
std::vector<Vec> robin_exchange(const InterfaceTopology& topology,
                                std::span<const Impedance> Q,
                                std::span<const Vec> u_b, std::span<const Vec> lambda);

/// Linear Robin interface problem around a base state. Local responses are
/// affine in the correction x of the mixed unknown:
///   u_b = u_b0 + H x,  lambda = lambda0 + x - Q H x,  H = t (K + t^T Q t)^-1 t^T,
/// and the solver finds x such that mu0 + x is a fixed point of the exchange.
struct Feti2lmProblem {
  std::span<const SubdomainSystem> subdomains;
  const InterfaceTopology* topology = nullptr;
  std::span<const Impedance> Q;
  std::span<const RobinFactorization> factors;
  std::vector<Vec> u_b0;
  std::vector<Vec> lambda0;
  std::vector<Vec> mu0;
};

/// GMRES without restart on the FETI-2LM interface problem. Returns the
/// correction x per subdomain. Throws KrylovError on stagnation or the cap.
std::vector<Vec> feti2lm_solve(const Feti2lmProblem& problem, const KrylovOptions& options,
                               KrylovReport& report,
                               const std::vector<Vec>* initial_guess = nullptr);

/// Plain GMRES on A x = b from x0 (full orthogonalization, no restart).
Vec gmres(const LinearOperator& op, const Vec& b, const Vec& x0,
          const KrylovOptions& options, KrylovReport& report);

struct RobinRobinOptions {
  int max_iterations = 100;
  /// Absolute targets on the scaled jump norm and on ||A lambda||.
  double jump_tolerance = 1e-10;
  double balance_tolerance = 1e-10;
  NewtonOptions local;
};

struct RobinRobinResult {
  int iterations = 0;
  bool converged = false;
  std::vector<double> jumps;
  std::vector<double> imbalances;
  std::vector<Vec> u;
  std::vector<Vec> u_b;
  std::vector<Vec> lambda;
  std::vector<Vec> mu;
};

/// Stationary Robin-Robin iteration: local Robin solves with
/// Q u_b + offset, weighted assembly u_bar = A^T A~ u_b and
/// lambda_bar = (I - A~^T A) lambda, update mu = Q u_bar + offset + lambda_bar.
/// Throws DivergenceError when the jump grows ten times over its first value.
RobinRobinResult robin_robin_stationary(std::span<const SubdomainSystem> subdomains,
                                        const InterfaceTopology& topology,
                                        std::span<const Impedance> Q,
                                        std::span<const Vec> offsets,
                                        const ScaledAssembly& scaled, double load_factor,
                                        const RobinRobinOptions& options,
                                        const std::vector<Vec>* initial_mu = nullptr);

} // namespace mixdd
