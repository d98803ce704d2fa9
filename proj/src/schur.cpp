#include "mixdd/schur.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mixdd {

LocalTangent local_tangent(const SubdomainSystem& sub, const Vec& u_free,
                           double load_factor, std::optional<double> target) {
  const Vec full = sub.full_displacement(u_free, load_factor);
  auto a = assemble(sub.local_mesh, sub.gauss_states, full);
  LocalTangent out;
  out.f_int = sub.to_free(a.f_int);
  out.K = extract_block(a.K_t, sub.free_dofs, sub.free_dofs);
  if (target) {
    const Vec dl = sub.local_mesh.dirichlet_lift(*target - load_factor);
    out.lift_force = -sub.to_free(Vec(a.K_t * dl));
  }
  out.trial_states = std::move(a.trial_states);
  return out;
}

Vec local_internal_force(const SubdomainSystem& sub, const Vec& u_free, double load_factor) {
  return sub.to_free(internal_force(sub.local_mesh, sub.gauss_states, sub.full_displacement(u_free, load_factor)));
}

double backtrack(const std::function<double(double)>& norm_at, double norm0, int max_halvings) {
  double t = 1.0, best_t = 1.0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= max_halvings; ++i, t *= 0.5) {
    const double n = norm_at(t);
    if (n < norm0) return t;
    if (n < best) {
      best = n;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

std::shared_ptr<Eigen::SimplicialLDLT<SpMat>> factorize_spd(const SpMat& K,
                                                            const char* what) {
  auto f = std::make_shared<Eigen::SimplicialLDLT<SpMat>>(K);
  if (f->info() != Eigen::Success) throw FactorizationError(std::string(what) + ": factorization failed");
  const Vec& d = f->vectorD();
  if (d.size() > 0 && !(d.minCoeff() > 1e-13 * d.cwiseAbs().maxCoeff()))
    throw FactorizationError(std::string(what) + ": matrix is singular or indefinite");
  return f;
}

} // namespace

SchurOperator::SchurOperator(const SpMat& K, std::span<const int> boundary,
                             std::span<const int> interior)
    : boundary_(boundary.begin(), boundary.end()), interior_(interior.begin(), interior.end()) {
  K_bb_ = extract_block(K, boundary, boundary);
  if (!interior_.empty()) {
    K_bi_ = extract_block(K, boundary, interior);
    K_ib_ = extract_block(K, interior, boundary);
    ii_ = factorize_spd(extract_block(K, interior, interior), "interior block");
  }
}

Vec SchurOperator::apply(const Vec& x_b) const {
  Vec y = K_bb_ * x_b;
  if (ii_) y -= K_bi_ * ii_->solve(Vec(K_ib_ * x_b));
  return y;
}

Mat SchurOperator::dense() const {
  Mat S = Mat(K_bb_);
  if (ii_ && size() > 0) S -= K_bi_ * ii_->solve(Mat(K_ib_));
  return 0.5 * (S + S.transpose());
}

Vec SchurOperator::condense(const Vec& r) const {
  Vec out(static_cast<Eigen::Index>(boundary_.size()));
  for (std::size_t k = 0; k < boundary_.size(); ++k) out[static_cast<Eigen::Index>(k)] = r[boundary_[k]];
  if (ii_) {
    Vec ri(static_cast<Eigen::Index>(interior_.size()));
    for (std::size_t k = 0; k < interior_.size(); ++k) ri[static_cast<Eigen::Index>(k)] = r[interior_[k]];
    out -= K_bi_ * ii_->solve(ri);
  }
  return out;
}

Vec SchurOperator::expand(const Vec& x_b, const Vec& r) const {
  Vec out(r.size());
  for (std::size_t k = 0; k < boundary_.size(); ++k) out[boundary_[k]] = x_b[static_cast<Eigen::Index>(k)];
  if (ii_) {
    Vec ri(static_cast<Eigen::Index>(interior_.size()));
    for (std::size_t k = 0; k < interior_.size(); ++k) ri[static_cast<Eigen::Index>(k)] = r[interior_[k]];
    const Vec xi = ii_->solve(Vec(ri - K_ib_ * x_b));
    for (std::size_t k = 0; k < interior_.size(); ++k) out[interior_[k]] = xi[static_cast<Eigen::Index>(k)];
  }
  return out;
}

Mat primal_schur(const SpMat& K, std::span<const int> boundary,
                 std::span<const int> interior) {
  return SchurOperator(K, boundary, interior).dense();
}

DirichletToNeumannResult dirichlet_to_neumann(const SubdomainSystem& sub, const Vec& u_b,
                                              double load_factor,
                                              const NewtonOptions& options,
                                              const Vec* u_guess) {
  DirichletToNeumannResult out;
  out.u = u_guess ? *u_guess : Vec::Zero(sub.num_free());
  for (int k = 0; k < sub.num_boundary(); ++k) out.u[sub.boundary_dofs[static_cast<std::size_t>(k)]] = u_b[k];
  const auto& interior = sub.interior_dofs;
  for (;;) {
    auto lt = local_tangent(sub, out.u, load_factor);
    const Vec r = lt.f_int + load_factor * sub.f_ext;
    Vec ri(static_cast<Eigen::Index>(interior.size()));
    for (std::size_t k = 0; k < interior.size(); ++k) ri[static_cast<Eigen::Index>(k)] = r[interior[k]];
    const double norm = ri.norm();
    out.history.push_back(norm);
    if (norm <= options.tolerance) {
      out.lambda_b = -sub.trace(r);
      out.trial_states = std::move(lt.trial_states);
      return out;
    }
    if (out.iterations >= options.max_iterations)
      throw DivergenceError("dirichlet_to_neumann: interior Newton did not converge", out.history);
    const auto ii = factorize_spd(extract_block(lt.K, interior, interior), "interior block");
    const Vec du = ii->solve(ri);
    for (std::size_t k = 0; k < interior.size(); ++k) out.u[interior[k]] += du[static_cast<Eigen::Index>(k)];
    ++out.iterations;
  }
}

RobinFactorization::RobinFactorization(const SpMat& K, std::span<const int> boundary,
                                       const Impedance& Q)
    : n_(static_cast<int>(K.rows())) {
  if (Q.size() != static_cast<int>(boundary.size()))
    throw ImpedanceError("robin_factorize: impedance size does not match the boundary");
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(K.nonZeros() + Q.sparse.nonZeros()));
  for (int c = 0; c < K.outerSize(); ++c)
    for (SpMat::InnerIterator it(K, c); it; ++it)
      triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int c = 0; c < Q.sparse.outerSize(); ++c)
    for (SpMat::InnerIterator it(Q.sparse, c); it; ++it)
      triplets.emplace_back(boundary[static_cast<std::size_t>(it.row())],
                            boundary[static_cast<std::size_t>(it.col())], it.value());
  SpMat Kt(K.rows(), K.cols());
  Kt.setFromTriplets(triplets.begin(), triplets.end());
  try {
    ldlt_ = factorize_spd(Kt, "robin_factorize");
  } catch (const FactorizationError&) {
    throw ImpedanceError("impedance not admissible: K + t^T Q_sparse t is not positive definite");
  }
  if (Q.has_low_rank()) {
    U_ = Mat::Zero(n_, Q.W.cols());
    for (std::size_t k = 0; k < boundary.size(); ++k) U_.row(boundary[k]) = Q.W.row(static_cast<Eigen::Index>(k));
    KinvU_ = ldlt_->solve(U_);
    const Mat C = Q.M - U_.transpose() * KinvU_;
    correction_.compute(0.5 * (C + C.transpose()));
    if (correction_.info() != Eigen::Success) throw ImpedanceError("impedance not admissible");
  }
}

Vec RobinFactorization::solve(const Vec& rhs) const {
  Vec y = ldlt_->solve(rhs);
  if (U_.cols() > 0) y += KinvU_ * correction_.solve(Vec(U_.transpose() * y));
  return y;
}

Vec robin_residual(const SubdomainSystem& sub, const Vec& f_int, double load_factor,
                   const Vec& mu_b, const Impedance& Q, const Vec& u_free,
                   const Vec* offset) {
  Vec interface = mu_b - Q.apply(sub.trace(u_free));
  if (offset) interface -= *offset;
  return f_int + load_factor * sub.f_ext + sub.extend(interface);
}

RobinSolveResult robin_nonlinear_solve(const SubdomainSystem& sub, const Vec& mu_b,
                                       const Impedance& Q, double load_factor,
                                       const Vec& u0, const NewtonOptions& options,
                                       const Vec* offset, std::optional<double> from) {
  RobinSolveResult out;
  out.u = u0;
  for (;;) {
    const bool predictor = from && out.iterations == 0;
    auto lt = predictor ? local_tangent(sub, out.u, *from, load_factor)
                        : local_tangent(sub, out.u, load_factor);
    Vec r = robin_residual(sub, lt.f_int, load_factor, mu_b, Q, out.u, offset);
    if (predictor) r += lt.lift_force;
    const double norm = r.norm();
    out.history.push_back(norm);
    // A nonzero lift force means u is not yet at the target Dirichlet values.
    if (norm <= options.tolerance && !(predictor && lt.lift_force.squaredNorm() > 0.0)) {
      out.u_b = sub.trace(out.u);
      out.lambda_b = mu_b - Q.apply(out.u_b);
      if (offset) out.lambda_b -= *offset;
      out.trial_states = std::move(lt.trial_states);
      out.K = std::move(lt.K);
      out.f_int = std::move(lt.f_int);
      return out;
    }
    if (out.iterations >= options.max_iterations)
      throw DivergenceError("local Newton did not converge in subdomain " + std::to_string(sub.id),
                            out.history);
    const RobinFactorization factor(lt.K, sub.boundary_dofs, Q);
    const Vec du = factor.solve(r);
    // The predictor residual is linearized, so its step is taken in full.
    double t = 1.0;
    if (options.line_search && !predictor)
      t = backtrack([&](double a) {
            const Vec trial = out.u + a * du;
            return robin_residual(sub, local_internal_force(sub, trial, load_factor), load_factor, mu_b, Q,
                                  trial, offset).norm();
          }, norm);
    out.u += t * du;
    ++out.iterations;
  }
}

RobinSolveResult robin_predictor(const SubdomainSystem& sub, const Vec& mu_b, const Impedance& Q,
                                 double load_factor, const Vec& u0, const LocalTangent& lt,
                                 double tolerance) {
  RobinSolveResult out;
  out.u = u0;
  const Vec r = robin_residual(sub, lt.f_int, load_factor, mu_b, Q, u0);
  out.history.push_back(r.norm());
  if (r.norm() > tolerance) {
    out.u += RobinFactorization(lt.K, sub.boundary_dofs, Q).solve(r);
    out.iterations = 1;
  }
  out.u_b = sub.trace(out.u);
  out.lambda_b = mu_b - Q.apply(out.u_b);
  out.K = lt.K;
  out.f_int = lt.f_int;
  return out;
}

AssembledImpedance::AssembledImpedance(const InterfaceTopology& topology,
                                       std::span<const Impedance> Q)
    : matrix_(Mat::Zero(topology.n_A, topology.n_A)) {
  for (int s = 0; s < topology.num_subdomains(); ++s) {
    const auto& map = topology.a_maps[static_cast<std::size_t>(s)];
    const Mat q = Q[static_cast<std::size_t>(s)].dense();
    for (std::size_t a = 0; a < map.size(); ++a)
      for (std::size_t b = 0; b < map.size(); ++b)
        matrix_(map[a], map[b]) += q(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  if (topology.n_A > 0) {
    llt_.compute(matrix_);
    if (llt_.info() != Eigen::Success)
      throw ImpedanceError("impedance not admissible: A Q A^T is not positive definite");
  }
}

Vec AssembledImpedance::solve(const Vec& rhs) const {
  if (rhs.size() == 0) return rhs;
  return llt_.solve(rhs);
}

CondensedRhs condensed_rhs(const InterfaceTopology& topology,
                           const AssembledImpedance& aqa,
                           std::span<const Vec> u_b, std::span<const Vec> mu_b,
                           std::span<const Impedance> Q,
                           const std::function<Vec(int, const Vec&)>& apply_S) {
  const Vec v0 = aqa.solve(topology.assemble(mu_b));
  CondensedRhs out;
  for (int s = 0; s < topology.num_subdomains(); ++s) {
    Vec bm = topology.restrict_to(s, v0) - u_b[static_cast<std::size_t>(s)];
    out.b_p.push_back(apply_S(s, bm) + Q[static_cast<std::size_t>(s)].apply(bm));
    out.b_m.push_back(std::move(bm));
  }
  return out;
}

} // namespace mixdd
