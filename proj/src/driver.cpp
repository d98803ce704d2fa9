#include "mixdd/driver.hpp"

#include "mixdd/parallel.hpp"
#include "mixdd/schur.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

namespace mixdd {

void Thresholds::validate() const {
  if (!(global > 0.0) || !(local_first > 0.0) || !(local > 0.0) || !(krylov > 0.0))
    throw ConfigError("thresholds must be positive");
  if (local > local_first)
    throw ConfigError("local threshold must not exceed the first-iteration local threshold");
  if (max_global < 1 || max_local < 1) throw ConfigError("iteration caps must be at least 1");
}

void LoadProgram::validate() const {
  if (factors.empty()) throw ConfigError("load program is empty");
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (!(factors[i] > 0.0)) throw ConfigError("load factors must be positive");
    if (i > 0 && !(factors[i] > factors[i - 1]))
      throw ConfigError("load factors must be strictly increasing");
  }
}

TangentSolver parse_tangent_solver(const std::string& name) {
  if (name == "bdd") return TangentSolver::Bdd;
  if (name == "feti2lm") return TangentSolver::Feti2lm;
  throw ConfigError("unknown tangent solver '" + name + "' (expected bdd or feti2lm)");
}

std::string to_string(TangentSolver solver) {
  return solver == TangentSolver::Bdd ? "bdd" : "feti2lm";
}

GlobalResidual global_residual(const Partition& partition, std::span<const Vec> u,
                               std::span<const Vec> f_int, std::span<const Vec> lambda,
                               double load_factor) {
  double sum = 0.0;
  std::vector<Vec> traces;
  for (const auto& sub : partition.subdomains) {
    const auto i = static_cast<std::size_t>(sub.id);
    const Vec r = f_int[i] + load_factor * sub.f_ext + sub.extend(lambda[i]);
    sum += r.squaredNorm();
    traces.push_back(sub.trace(u[i]));
  }
  sum += partition.topology.assemble(lambda).squaredNorm();
  return {std::sqrt(sum), jump_norm(partition.topology, traces)};
}

ReferenceScales reference_scales(const Mesh& mesh, double load_factor) {
  const Vec lift = mesh.dirichlet_lift(load_factor);
  // Linear response of the virgin structure, so that the scale does not
  // saturate when the lift alone would yield.
  const std::vector<GaussPointState> virgin(mesh.elements.size());
  const auto a = assemble(mesh, virgin, Vec::Zero(mesh.num_dofs()));
  Vec r = -(a.K_t * lift) + mesh.external_force(load_factor);
  for (const auto& [dof, value] : mesh.dirichlet) r[dof] = 0.0;
  ReferenceScales out;
  out.force = r.norm() > 0.0 ? r.norm() : 1.0;
  out.displacement = lift.norm() > 0.0 ? lift.norm() : 1.0;
  return out;
}

std::vector<Impedance> build_impedances(ImpedanceKind kind, const Partition& partition,
                                        std::span<const SpMat> K, std::span<const Vec> residuals,
                                        const ScaledAssembly& scaled, const BddOperator& bdd) {
  const auto& topo = partition.topology;
  const int ns = partition.num_subdomains();
  std::vector<SpMat> blocks(static_cast<std::size_t>(ns));
  std::vector<Vec> diagonals(static_cast<std::size_t>(ns));
  for (int s = 0; s < ns; ++s) {
    const auto& sub = partition.subdomains[static_cast<std::size_t>(s)];
    blocks[static_cast<std::size_t>(s)] = extract_block(K[static_cast<std::size_t>(s)], sub.boundary_dofs, sub.boundary_dofs);
    diagonals[static_cast<std::size_t>(s)] = blocks[static_cast<std::size_t>(s)].diagonal();
  }
  const Mat coarse_inverse = kind == ImpedanceKind::TwoScale ? bdd.coarse().inverse() : Mat();
  std::vector<Impedance> Q(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    auto& q = Q[static_cast<std::size_t>(s)];
    if (topo.neighbors[static_cast<std::size_t>(s)].empty()) {
      q.sparse.resize(partition.subdomains[static_cast<std::size_t>(s)].num_boundary(),
                      partition.subdomains[static_cast<std::size_t>(s)].num_boundary());
      return;
    }
    switch (kind) {
    case ImpedanceKind::Lumped: q = lumped_neighbor(s, topo, blocks); break;
    case ImpedanceKind::Superlumped: q = superlumped_neighbor(s, topo, diagonals); break;
    case ImpedanceKind::TwoScale:
      q = two_scale(s, topo, scaled, superlumped_neighbor(s, topo, diagonals), bdd.coarse_basis(),
                    bdd.column_owner(), coarse_inverse);
      break;
    case ImpedanceKind::ExactComplement:
      q = exact_complement(s, partition, K, residuals).Q;
      break;
    }
  });
  return Q;
}

namespace {

Vec gather_displacement(const Mesh& mesh, const Partition& partition, std::span<const Vec> u,
                        double load_factor) {
  Vec full = mesh.dirichlet_lift(load_factor);
  for (const auto& sub : partition.subdomains)
    for (int i = 0; i < sub.num_free(); ++i)
      full[sub.global_dof(sub.free_dofs[static_cast<std::size_t>(i)])] =
          u[static_cast<std::size_t>(sub.id)][i];
  return full;
}

ScaledAssembly scaled_from(const Partition& partition, std::span<const SpMat> K) {
  std::vector<Vec> deltas;
  for (const auto& sub : partition.subdomains) {
    const SpMat& k = K[static_cast<std::size_t>(sub.id)];
    Vec d(sub.num_boundary());
    for (int i = 0; i < sub.num_boundary(); ++i) {
      const int b = sub.boundary_dofs[static_cast<std::size_t>(i)];
      d[i] = k.coeff(b, b);
    }
    deltas.push_back(d);
  }
  return build_scaled(partition.topology, deltas);
}

std::vector<Mat> dense_schur(const Partition& partition, std::span<const SpMat> K) {
  std::vector<Mat> S(partition.subdomains.size());
  parallel_for(partition.num_subdomains(), [&](int s) {
    const auto& sub = partition.subdomains[static_cast<std::size_t>(s)];
    S[static_cast<std::size_t>(s)] = primal_schur(K[static_cast<std::size_t>(s)], sub.boundary_dofs, sub.interior_dofs);
  });
  return S;
}

std::string join(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  return out.str();
}

void log_line(const SolverOptions& options, const std::string& method, std::size_t increment,
              double load_factor, int iteration, double criterion, const GlobalResidual& gr, int krylov,
              const std::vector<int>* local, double step = 1.0) {
  if (!options.log) return;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%s increment=%zu load=%.6g global=%d criterion=%.6e residual=%.6e jump=%.6e krylov=%d",
                method.c_str(), increment + 1, load_factor, iteration, criterion, gr.residual, gr.jump, krylov);
  std::string line = buf;
  if (step != 1.0) {
    std::snprintf(buf, sizeof buf, " step=%.3g", step);
    line += buf;
  }
  if (local) line += " local=[" + join(*local) + "]";
  options.log(line);
}


// Interface solve of one global iteration with BDD on the condensed primal
// problem, followed by the recovery of u and lambda.
int bdd_tangent_step(const Partition& part, std::span<const SpMat> K_kj,
                     std::span<const RigidBodyModes> modes, std::span<const Impedance> Q,
                     std::span<const Vec> mu, const std::vector<Vec>& u_kj,
                     const std::vector<Vec>& u_b_kj, const SolverOptions& options,
                     RitzStore* store, std::vector<Vec>& u, std::vector<Vec>& lambda) {
  const auto& topo = part.topology;
  const int ns = part.num_subdomains();
  const auto S = dense_schur(part, K_kj);
  const BddOperator bdd(topo, S, scaled_from(part, K_kj), modes);
  const AssembledImpedance aqa(topo, Q);
  const auto c = condensed_rhs(topo, aqa, u_b_kj, mu, Q, [&](int s, const Vec& x) {
    return Vec(S[static_cast<std::size_t>(s)] * x);
  });
  KrylovOptions kopt;
  kopt.tolerance = options.thresholds.krylov;
  kopt.keep_lanczos = store != nullptr;
  KrylovReport rep;
  const Vec dv = bdd_solve(bdd, topo.assemble(c.b_p), kopt, rep, store);
  if (store && rep.iterations > 0) srks_extract(rep, bdd.as_operator(), *store);
  std::vector<RobinFactorization> factors(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const auto& sub = part.subdomains[static_cast<std::size_t>(s)];
    factors[static_cast<std::size_t>(s)] = RobinFactorization(K_kj[static_cast<std::size_t>(s)], sub.boundary_dofs, Q[static_cast<std::size_t>(s)]);
  });
  const auto f = recover_fields(dv, c.b_m, part.subdomains, topo, S, Q, factors);
  for (int s = 0; s < ns; ++s) {
    const auto i = static_cast<std::size_t>(s);
    u[i] = u_kj[i] + f.du[i];
    lambda[i] = mu[i] - Q[i].apply(u_b_kj[i]) + f.dlambda[i];
  }
  return rep.iterations;
}

// Same step with FETI-2LM on the Robin interface unknown.
int feti_tangent_step(const Partition& part, std::span<const SpMat> K_kj,
                      std::span<const Impedance> Q, std::span<const Vec> mu,
                      const std::vector<Vec>& u_kj, const std::vector<Vec>& u_b_kj,
                      const SolverOptions& options, std::vector<Vec>& u,
                      std::vector<Vec>& lambda) {
  const int ns = part.num_subdomains();
  std::vector<RobinFactorization> factors(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const auto& sub = part.subdomains[static_cast<std::size_t>(s)];
    factors[static_cast<std::size_t>(s)] = RobinFactorization(K_kj[static_cast<std::size_t>(s)], sub.boundary_dofs, Q[static_cast<std::size_t>(s)]);
  });
  Feti2lmProblem prob;
  prob.subdomains = part.subdomains;
  prob.topology = &part.topology;
  prob.Q = Q;
  prob.factors = factors;
  for (int s = 0; s < ns; ++s) {
    const auto i = static_cast<std::size_t>(s);
    prob.u_b0.push_back(u_b_kj[i]);
    prob.lambda0.push_back(mu[i] - Q[i].apply(u_b_kj[i]));
    prob.mu0.push_back(mu[i]);
  }
  KrylovOptions kopt;
  kopt.tolerance = options.thresholds.krylov;
  KrylovReport rep;
  const auto x = feti2lm_solve(prob, kopt, rep);
  for (int s = 0; s < ns; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const auto& sub = part.subdomains[i];
    const Vec du = factors[i].solve(sub.extend(x[i]));
    u[i] = u_kj[i] + du;
    lambda[i] = prob.lambda0[i] + x[i] - Q[i].apply(sub.trace(du));
  }
  return rep.iterations;
}

std::vector<RigidBodyModes> all_modes(const Partition& part) {
  std::vector<RigidBodyModes> modes(part.subdomains.size());
  parallel_for(part.num_subdomains(), [&](int s) {
    modes[static_cast<std::size_t>(s)] = rigid_body_modes(part.subdomains[static_cast<std::size_t>(s)]);
  });
  return modes;
}

// Tangents at u. On the first iteration of an increment u is in equilibrium
// with the previous Dirichlet values: tangents are taken there and the
// internal force carries the linearized Dirichlet increment.
std::vector<LocalTangent> all_tangents(const Partition& part, std::span<const Vec> u, double lf,
                                       std::optional<double> previous) {
  std::vector<LocalTangent> lt(part.subdomains.size());
  parallel_for(part.num_subdomains(), [&](int s) {
    const auto i = static_cast<std::size_t>(s);
    if (previous) {
      lt[i] = local_tangent(part.subdomains[i], u[i], *previous, lf);
      lt[i].f_int += lt[i].lift_force;
    } else {
      lt[i] = local_tangent(part.subdomains[i], u[i], lf);
    }
  });
  return lt;
}

// Norm of the assembled residual from subdomain residuals on free dofs.
double assembled_norm(const Partition& part, std::span<const Vec> r) {
  double interior = 0.0;
  std::vector<Vec> r_b;
  for (const auto& sub : part.subdomains) {
    const Vec& rs = r[static_cast<std::size_t>(sub.id)];
    for (int d : sub.interior_dofs) interior += rs[d] * rs[d];
    r_b.push_back(sub.trace(rs));
  }
  return std::sqrt(interior + part.topology.assemble(r_b).squaredNorm());
}

double nks_residual(const Partition& part, std::span<const Vec> u, double lf) {
  std::vector<Vec> r(part.subdomains.size());
  parallel_for(part.num_subdomains(), [&](int s) {
    const auto& sub = part.subdomains[static_cast<std::size_t>(s)];
    r[static_cast<std::size_t>(s)] = local_internal_force(sub, u[static_cast<std::size_t>(s)], lf) + lf * sub.f_ext;
  });
  return assembled_norm(part, r);
}

void commit(Partition& part, std::vector<LocalTangent>& lt) {
  for (auto& sub : part.subdomains) sub.gauss_states = std::move(lt[static_cast<std::size_t>(sub.id)].trial_states);
}

void finish_increment(IncrementReport& inc, SolveReport& report, int& cum_k, int& cum_g) {
  cum_k += inc.krylov_iterations;
  cum_g += inc.global_iterations;
  inc.cumulated_krylov = cum_k;
  inc.cumulated_global = cum_g;
  report.increments.push_back(std::move(inc));
}

[[noreturn]] void fail(const std::string& method, std::size_t increment, const std::string& what,
                       const SolveReport& report) {
  throw SolveFailure(method + ": increment " + std::to_string(increment + 1) + ": " + what, report);
}

} // namespace

KrylovReport linear_feti2lm(const Partition& partition, ImpedanceKind kind, double load_factor,
                            double tolerance) {
  const int ns = partition.num_subdomains();
  std::vector<SpMat> K(static_cast<std::size_t>(ns));
  std::vector<Vec> residuals(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const auto i = static_cast<std::size_t>(s);
    const auto& sub = partition.subdomains[i];
    const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), load_factor);
    K[i] = lt.K;
    residuals[i] = lt.f_int + load_factor * sub.f_ext;
  });
  BddOperator bdd;
  if (kind == ImpedanceKind::TwoScale)
    bdd = BddOperator(partition.topology, dense_schur(partition, K), scaled_from(partition, K), all_modes(partition));
  const auto Q = build_impedances(kind, partition, K, residuals, scaled_from(partition, K), bdd);
  std::vector<RobinFactorization> factors(static_cast<std::size_t>(ns));
  Feti2lmProblem prob;
  prob.u_b0.resize(static_cast<std::size_t>(ns));
  prob.lambda0.resize(static_cast<std::size_t>(ns));
  prob.mu0.resize(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const auto i = static_cast<std::size_t>(s);
    const auto& sub = partition.subdomains[i];
    factors[i] = RobinFactorization(K[i], sub.boundary_dofs, Q[i]);
    // Local Robin problem with mu = 0: the structure is linear, one solve.
    const Vec u = factors[i].solve(residuals[i]);
    prob.u_b0[i] = sub.trace(u);
    prob.mu0[i] = Vec::Zero(sub.num_boundary());
    prob.lambda0[i] = -Q[i].apply(prob.u_b0[i]);
  });
  prob.subdomains = partition.subdomains;
  prob.topology = &partition.topology;
  prob.Q = Q;
  prob.factors = factors;
  KrylovOptions kopt;
  kopt.tolerance = tolerance;
  KrylovReport rep;
  feti2lm_solve(prob, kopt, rep);
  return rep;
}

SolveReport run_mixed(const Mesh& mesh, const Partition& partition, const LoadProgram& program,
                      const SolverOptions& options) {
  program.validate();
  options.thresholds.validate();
  const auto& th = options.thresholds;
  Partition part = partition;
  const auto& topo = part.topology;
  const int ns = part.num_subdomains();
  const auto modes = all_modes(part);
  std::vector<Vec> u(static_cast<std::size_t>(ns)), lambda(static_cast<std::size_t>(ns));
  for (const auto& sub : part.subdomains) {
    u[static_cast<std::size_t>(sub.id)] = Vec::Zero(sub.num_free());
    lambda[static_cast<std::size_t>(sub.id)] = Vec::Zero(sub.num_boundary());
  }
  RitzStore store;
  store.theta = options.srks_theta;
  store.capacity = options.srks_capacity;

  SolveReport report;
  report.method = "mixed/" + to_string(options.impedance) + (options.srks ? "+srks" : "");
  int cum_k = 0, cum_g = 0;
  for (std::size_t n = 0; n < program.factors.size(); ++n) {
    const double lf = program.factors[n];
    const double previous = n == 0 ? 0.0 : program.factors[n - 1];
    const auto scales = reference_scales(mesh, lf);
    IncrementReport inc;
    inc.load_factor = lf;
    try {
      for (int k = 0;; ++k) {
        auto lt = all_tangents(part, u, lf, k == 0 ? std::optional<double>(previous) : std::nullopt);
        std::vector<SpMat> K(static_cast<std::size_t>(ns));
        std::vector<Vec> f_int(static_cast<std::size_t>(ns)), residuals(static_cast<std::size_t>(ns));
        for (int s = 0; s < ns; ++s) {
          const auto i = static_cast<std::size_t>(s);
          K[i] = lt[i].K;
          f_int[i] = lt[i].f_int;
          residuals[i] = lt[i].f_int + lf * part.subdomains[i].f_ext;
        }
        const auto gr = global_residual(part, u, f_int, lambda, lf);
        const double crit = gr.residual / scales.force + gr.jump / scales.displacement;
        inc.criterion.push_back(crit);
        if (crit <= th.global) {
          log_line(options, report.method, n, lf, k, crit, gr, 0, nullptr);
          commit(part, lt);
          break;
        }
        if (k >= th.max_global)
          fail(report.method, n, "no global convergence in " + std::to_string(th.max_global) + " iterations", report);

        // Impedances from the tangents at u_k.
        const auto scaled = scaled_from(part, K);
        BddOperator coarse;
        if (options.impedance == ImpedanceKind::TwoScale)
          coarse = BddOperator(topo, dense_schur(part, K), scaled, modes);
        const auto Q = build_impedances(options.impedance, part, K, residuals, scaled, coarse);
        std::vector<Vec> mu(static_cast<std::size_t>(ns));
        for (int s = 0; s < ns; ++s) {
          const auto i = static_cast<std::size_t>(s);
          mu[i] = lambda[i] + Q[i].apply(part.subdomains[i].trace(u[i]));
        }

        // Local Robin problems. The first iteration of an increment is the
        // linear predictor: one local step on the model linearized at the
        // converged state, so that the tangent step propagates the Dirichlet
        // increment before any local plasticity develops.
        const NewtonOptions local{(k == 0 ? th.local_first : th.local) * scales.force, th.max_local};
        std::vector<RobinSolveResult> loc(static_cast<std::size_t>(ns));
        parallel_for(ns, [&](int s) {
          const auto i = static_cast<std::size_t>(s);
          if (k == 0 && options.linear_predictor)
            loc[i] = robin_predictor(part.subdomains[i], mu[i], Q[i], lf, u[i], lt[i], local.tolerance);
          else
            loc[i] = robin_nonlinear_solve(part.subdomains[i], mu[i], Q[i], lf, u[i], local, nullptr,
                                           k == 0 ? std::optional<double>(previous) : std::nullopt);
        });
        std::vector<int> local_its;
        std::vector<Vec> u_kj, u_b_kj;
        std::vector<SpMat> K_kj;
        for (auto& r : loc) {
          local_its.push_back(r.iterations);
          u_kj.push_back(std::move(r.u));
          u_b_kj.push_back(std::move(r.u_b));
          K_kj.push_back(std::move(r.K));
        }

        // Global tangent step and recovery.
        const std::vector<Vec> u_k = u, lambda_k = lambda;
        const int its = options.tangent_solver == TangentSolver::Bdd
                            ? bdd_tangent_step(part, K_kj, modes, Q, mu, u_kj, u_b_kj, options,
                                               options.srks ? &store : nullptr, u, lambda)
                            : feti_tangent_step(part, K_kj, Q, mu, u_kj, u_b_kj, options, u, lambda);
        // Backtracking on the global criterion along the whole update from
        // (u_k, lambda_k). The predictor is linear and always taken in full.
        double step = 1.0;
        if (th.line_search && k > 0) {
          std::vector<Vec> du(static_cast<std::size_t>(ns)), dl(static_cast<std::size_t>(ns));
          for (int s = 0; s < ns; ++s) {
            const auto i = static_cast<std::size_t>(s);
            du[i] = u[i] - u_k[i];
            dl[i] = lambda[i] - lambda_k[i];
          }
          const double t = backtrack([&](double a) {
            std::vector<Vec> ut(static_cast<std::size_t>(ns)), lt_(static_cast<std::size_t>(ns)),
                ft(static_cast<std::size_t>(ns));
            parallel_for(ns, [&](int s) {
              const auto i = static_cast<std::size_t>(s);
              ut[i] = u_k[i] + a * du[i];
              lt_[i] = lambda_k[i] + a * dl[i];
              ft[i] = local_internal_force(part.subdomains[i], ut[i], lf);
            });
            const auto g = global_residual(part, ut, ft, lt_, lf);
            return g.residual / scales.force + g.jump / scales.displacement;
          }, crit);
          step = t;
          for (int s = 0; s < ns; ++s) {
            const auto i = static_cast<std::size_t>(s);
            u[i] = u_k[i] + t * du[i];
            lambda[i] = lambda_k[i] + t * dl[i];
          }
        }
        log_line(options, report.method, n, lf, k, crit, gr, its, &local_its, step);
        inc.local_iterations.push_back(std::move(local_its));
        inc.krylov_per_iteration.push_back(its);
        inc.krylov_iterations += its;
        ++inc.global_iterations;
      }
    } catch (const SolveFailure&) {
      throw;
    } catch (const DivergenceError& e) {
      std::string what = e.what();
      if (!e.history().empty()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " (residual %.3e -> %.3e)", e.history().front(), e.history().back());
        what += buf;
      }
      fail(report.method, n, what, report);
    } catch (const Error& e) {
      fail(report.method, n, e.what(), report);
    }
    inc.displacement = gather_displacement(mesh, part, u, lf);
    finish_increment(inc, report, cum_k, cum_g);
  }
  return report;
}

SolveReport run_nks(const Mesh& mesh, const Partition& partition, const LoadProgram& program,
                    const SolverOptions& options) {
  program.validate();
  options.thresholds.validate();
  const auto& th = options.thresholds;
  Partition part = partition;
  const auto& topo = part.topology;
  const int ns = part.num_subdomains();
  const auto modes = all_modes(part);
  std::vector<Vec> u(static_cast<std::size_t>(ns));
  for (const auto& sub : part.subdomains) u[static_cast<std::size_t>(sub.id)] = Vec::Zero(sub.num_free());
  RitzStore store;
  store.theta = options.srks_theta;
  store.capacity = options.srks_capacity;

  SolveReport report;
  report.method = std::string("nks") + (options.srks ? "+srks" : "");
  int cum_k = 0, cum_g = 0;
  for (std::size_t n = 0; n < program.factors.size(); ++n) {
    const double lf = program.factors[n];
    const double previous = n == 0 ? 0.0 : program.factors[n - 1];
    const auto scales = reference_scales(mesh, lf);
    IncrementReport inc;
    inc.load_factor = lf;
    try {
      for (int k = 0;; ++k) {
        auto lt = all_tangents(part, u, lf, k == 0 ? std::optional<double>(previous) : std::nullopt);
        std::vector<SpMat> K(static_cast<std::size_t>(ns));
        std::vector<Vec> r(static_cast<std::size_t>(ns));
        for (int s = 0; s < ns; ++s) {
          const auto i = static_cast<std::size_t>(s);
          K[i] = lt[i].K;
          r[i] = lt[i].f_int + lf * part.subdomains[i].f_ext;
        }
        const GlobalResidual gr{assembled_norm(part, r), 0.0};
        const double crit = gr.residual / scales.force;
        inc.criterion.push_back(crit);
        if (crit <= th.global) {
          log_line(options, report.method, n, lf, k, crit, gr, 0, nullptr);
          commit(part, lt);
          break;
        }
        if (k >= th.max_global)
          fail(report.method, n, "no global convergence in " + std::to_string(th.max_global) + " iterations", report);

        std::vector<SchurOperator> so(static_cast<std::size_t>(ns));
        std::vector<Mat> S(static_cast<std::size_t>(ns));
        std::vector<Vec> cond(static_cast<std::size_t>(ns));
        parallel_for(ns, [&](int s) {
          const auto i = static_cast<std::size_t>(s);
          const auto& sub = part.subdomains[i];
          so[i] = SchurOperator(K[i], sub.boundary_dofs, sub.interior_dofs);
          S[i] = so[i].dense();
          cond[i] = so[i].condense(r[i]);
        });
        const BddOperator bdd(topo, std::move(S), scaled_from(part, K), modes);
        KrylovOptions kopt;
        kopt.tolerance = th.krylov;
        kopt.keep_lanczos = options.srks;
        KrylovReport rep;
        const Vec du_A = bdd_solve(bdd, topo.assemble(cond), kopt, rep, options.srks ? &store : nullptr);
        if (options.srks && rep.iterations > 0) srks_extract(rep, bdd.as_operator(), store);
        std::vector<Vec> du(static_cast<std::size_t>(ns));
        parallel_for(ns, [&](int s) {
          const auto i = static_cast<std::size_t>(s);
          du[i] = so[i].expand(topo.restrict_to(s, du_A), r[i]);
        });
        // The first residual is linearized, so the predictor step is taken in full.
        const double t = k == 0 || !th.line_search ? 1.0 : backtrack([&](double a) {
          std::vector<Vec> trial(static_cast<std::size_t>(ns));
          for (int s = 0; s < ns; ++s)
            trial[static_cast<std::size_t>(s)] = u[static_cast<std::size_t>(s)] + a * du[static_cast<std::size_t>(s)];
          return nks_residual(part, trial, lf);
        }, crit * scales.force);
        for (int s = 0; s < ns; ++s) u[static_cast<std::size_t>(s)] += t * du[static_cast<std::size_t>(s)];
        log_line(options, report.method, n, lf, k, crit, gr, rep.iterations, nullptr, t);
        inc.krylov_per_iteration.push_back(rep.iterations);
        inc.krylov_iterations += rep.iterations;
        ++inc.global_iterations;
      }
    } catch (const SolveFailure&) {
      throw;
    } catch (const DivergenceError& e) {
      std::string what = e.what();
      if (!e.history().empty()) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " (residual %.3e -> %.3e)", e.history().front(), e.history().back());
        what += buf;
      }
      fail(report.method, n, what, report);
    } catch (const Error& e) {
      fail(report.method, n, e.what(), report);
    }
    inc.displacement = gather_displacement(mesh, part, u, lf);
    finish_increment(inc, report, cum_k, cum_g);
  }
  return report;
}

SolveReport run_monolithic(const Mesh& mesh, const LoadProgram& program,
                           const Thresholds& thresholds) {
  program.validate();
  thresholds.validate();
  std::vector<int> free;
  for (int d = 0; d < mesh.num_dofs(); ++d)
    if (!mesh.dirichlet.count(d)) free.push_back(d);
  std::vector<GaussPointState> states(mesh.elements.size());
  Vec u_free = Vec::Zero(static_cast<Eigen::Index>(free.size()));
  SolveReport report;
  report.method = "monolithic";
  int cum_k = 0, cum_g = 0;
  for (std::size_t n = 0; n < program.factors.size(); ++n) {
    const double lf = program.factors[n];
    const double previous = n == 0 ? 0.0 : program.factors[n - 1];
    const auto scales = reference_scales(mesh, lf);
    const Vec f_ext = mesh.external_force(lf);
    IncrementReport inc;
    inc.load_factor = lf;
    Vec full;
    for (int k = 0;; ++k) {
      // The first iteration linearizes the Dirichlet increment at the
      // converged state.
      full = mesh.dirichlet_lift(k == 0 ? previous : lf);
      for (std::size_t i = 0; i < free.size(); ++i) full[free[i]] = u_free[static_cast<Eigen::Index>(i)];
      auto a = assemble(mesh, states, full);
      if (k == 0) a.f_int -= a.K_t * mesh.dirichlet_lift(lf - previous);
      Vec r(static_cast<Eigen::Index>(free.size()));
      for (std::size_t i = 0; i < free.size(); ++i) r[static_cast<Eigen::Index>(i)] = a.f_int[free[i]] + f_ext[free[i]];
      const double crit = r.norm() / scales.force;
      inc.criterion.push_back(crit);
      if (crit <= thresholds.global) {
        states = std::move(a.trial_states);
        break;
      }
      if (k >= thresholds.max_global)
        fail(report.method, n, "no convergence in " + std::to_string(thresholds.max_global) + " iterations", report);
      const SpMat K = extract_block(a.K_t, free, free);
      Eigen::SimplicialLDLT<SpMat> ldlt(K);
      if (ldlt.info() != Eigen::Success) fail(report.method, n, "singular tangent", report);
      const Vec du = ldlt.solve(r);
      const double t = k == 0 || !thresholds.line_search ? 1.0 : backtrack([&](double a) {
        Vec trial = mesh.dirichlet_lift(lf);
        for (std::size_t i = 0; i < free.size(); ++i)
          trial[free[i]] = u_free[static_cast<Eigen::Index>(i)] + a * du[static_cast<Eigen::Index>(i)];
        const Vec f = internal_force(mesh, states, trial) + f_ext;
        double sum = 0.0;
        for (int d : free) sum += f[d] * f[d];
        return std::sqrt(sum);
      }, r.norm());
      u_free += t * du;
      ++inc.global_iterations;
    }
    inc.displacement = mesh.dirichlet_lift(lf);
    for (std::size_t i = 0; i < free.size(); ++i) inc.displacement[free[i]] = u_free[static_cast<Eigen::Index>(i)];
    finish_increment(inc, report, cum_k, cum_g);
  }
  return report;
}

} // namespace mixdd
