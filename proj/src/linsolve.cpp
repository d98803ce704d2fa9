#include "mixdd/linsolve.hpp"

#include "mixdd/parallel.hpp"

#include <cmath>
#include <string>

namespace mixdd {

Deflation::Deflation(Mat Z, const LinearOperator& op) : Z_(std::move(Z)) {
  SZ_.resize(Z_.rows(), Z_.cols());
  for (Eigen::Index c = 0; c < Z_.cols(); ++c) SZ_.col(c) = op(Z_.col(c));
  C_ = Z_.transpose() * SZ_;
  C_ = 0.5 * (C_ + C_.transpose()).eval();
  if (Z_.cols() > 0) {
    llt_.compute(C_);
    if (llt_.info() != Eigen::Success)
      throw FactorizationError("coarse matrix is not positive definite");
  }
}

Vec Deflation::solve(const Vec& y) const {
  if (Z_.cols() == 0) return y;
  return llt_.solve(y);
}

Mat Deflation::inverse() const {
  if (Z_.cols() == 0) return Mat(0, 0);
  return llt_.solve(Mat::Identity(Z_.cols(), Z_.cols()));
}

Vec Deflation::coarse_correction(const Vec& b) const {
  if (Z_.cols() == 0) return Vec::Zero(b.size());
  return Z_ * llt_.solve(Vec(Z_.transpose() * b));
}

Vec Deflation::project(const Vec& x) const {
  if (Z_.cols() == 0) return x;
  return x - Z_ * llt_.solve(Vec(SZ_.transpose() * x));
}

Vec projected_pcg(const LinearOperator& op, const LinearOperator& preconditioner,
                  const Deflation* deflation, const Vec& b, const KrylovOptions& options,
                  KrylovReport& report) {
  report = KrylovReport{};
  const auto n = b.size();
  const int cap = options.max_iterations < 0 ? static_cast<int>(n) : options.max_iterations;
  const double bnorm = b.norm();
  const bool deflate = deflation && deflation->size() > 0;
  auto coarse_norm = [&](const Vec& r) {
    return deflate ? (deflation->basis().transpose() * r).norm() : 0.0;
  };
  if (bnorm == 0.0) {
    report.residuals.push_back(0.0);
    report.coarse_residuals.push_back(0.0);
    return Vec::Zero(n);
  }
  Vec x = deflate ? deflation->coarse_correction(b) : Vec::Zero(n);
  Vec r = b - op(x);
  const double tol = options.tolerance * bnorm;
  report.residuals.push_back(r.norm());
  report.coarse_residuals.push_back(coarse_norm(r));
  if (options.observer) options.observer(x);
  if (options.keep_lanczos) report.lanczos.resize(n, 0);
  auto precondition = [&](const Vec& v) {
    Vec z = preconditioner(v);
    return deflate ? deflation->project(z) : z;
  };
  if (report.residuals.back() <= tol) {
    report.relative_residual = report.residuals.back() / bnorm;
    return x;
  }
  Vec z = precondition(r);
  double rho = r.dot(z);
  if (!(rho > 0.0))
    throw KrylovError("projected CG: preconditioner breakdown", 0, report.residuals);
  Vec p = z;
  for (;;) {
    if (report.iterations >= cap)
      throw KrylovError("projected CG: no convergence in " + std::to_string(cap) + " iterations",
                        report.iterations, report.residuals);
    const Vec q = op(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0))
      throw KrylovError("projected CG: operator breakdown", report.iterations, report.residuals);
    const double alpha = rho / pq;
    if (options.keep_lanczos) {
      report.lanczos.conservativeResize(Eigen::NoChange, report.lanczos.cols() + 1);
      const double sign = (report.iterations % 2 == 0) ? 1.0 : -1.0;
      report.lanczos.col(report.lanczos.cols() - 1) = sign * z / std::sqrt(rho);
      report.alphas.push_back(alpha);
    }
    x += alpha * p;
    r -= alpha * q;
    ++report.iterations;
    report.residuals.push_back(r.norm());
    report.coarse_residuals.push_back(coarse_norm(r));
    if (options.observer) options.observer(x);
    const bool done = report.residuals.back() <= tol;
    if (done && !options.keep_lanczos) break;
    z = precondition(r);
    const double rho_next = r.dot(z);
    if (done) {
      report.betas.push_back(rho_next > 0.0 ? rho_next / rho : 0.0);
      break;
    }
    if (!(rho_next > 0.0))
      throw KrylovError("projected CG: preconditioner breakdown", report.iterations,
                        report.residuals);
    const double beta = rho_next / rho;
    if (options.keep_lanczos) report.betas.push_back(beta);
    p = z + beta * p;
    rho = rho_next;
  }
  report.relative_residual = report.residuals.back() / bnorm;
  return x;
}

BddOperator::BddOperator(const InterfaceTopology& topology, std::vector<Mat> schur,
                         const ScaledAssembly& scaled, std::span<const RigidBodyModes> modes)
    : topology_(&topology), schur_(std::move(schur)), weights_(scaled.a_tilde) {
  const int ns = topology.num_subdomains();
  pinv_.resize(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const Mat& S = schur_[static_cast<std::size_t>(s)];
    if (S.rows() == 0) {
      pinv_[static_cast<std::size_t>(s)] = S;
      return;
    }
    const Eigen::SelfAdjointEigenSolver<Mat> eig(S);
    const Vec& lam = eig.eigenvalues();
    const double top = lam.cwiseAbs().maxCoeff();
    Vec inv = Vec::Zero(lam.size());
    const int drop = modes[static_cast<std::size_t>(s)].count();
    for (Eigen::Index k = drop; k < lam.size(); ++k)
      if (lam[k] > 1e-14 * top) inv[k] = 1.0 / lam[k];
    pinv_[static_cast<std::size_t>(s)] =
        eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  });

  int m = 0;
  for (const auto& r : modes) m += r.count();
  G_ = Mat::Zero(topology.n_A, m);
  int c = 0;
  for (int s = 0; s < ns; ++s) {
    const auto& map = topology.a_maps[static_cast<std::size_t>(s)];
    const auto& R = modes[static_cast<std::size_t>(s)].boundary;
    for (Eigen::Index k = 0; k < R.cols(); ++k, ++c) {
      for (std::size_t i = 0; i < map.size(); ++i)
        G_(map[i], c) += weights_[static_cast<std::size_t>(s)][static_cast<Eigen::Index>(i)] * R(static_cast<Eigen::Index>(i), k);
      owner_.push_back(s);
    }
  }
  coarse_ = Deflation(G_, [this](const Vec& x) { return apply(x); });
}

Vec BddOperator::apply(const Vec& x) const {
  const auto& topo = *topology_;
  std::vector<Vec> local(static_cast<std::size_t>(topo.num_subdomains()));
  parallel_for(topo.num_subdomains(), [&](int s) {
    local[static_cast<std::size_t>(s)] = schur_[static_cast<std::size_t>(s)] * topo.restrict_to(s, x);
  });
  return topo.assemble(local);
}

Vec BddOperator::precondition(const Vec& r) const {
  const auto& topo = *topology_;
  std::vector<Vec> local(static_cast<std::size_t>(topo.num_subdomains()));
  parallel_for(topo.num_subdomains(), [&](int s) {
    const Vec& w = weights_[static_cast<std::size_t>(s)];
    const Vec y = pinv_[static_cast<std::size_t>(s)] * w.cwiseProduct(topo.restrict_to(s, r));
    local[static_cast<std::size_t>(s)] = w.cwiseProduct(y);
  });
  return topo.assemble(local);
}

Mat BddOperator::dense() const {
  const auto& topo = *topology_;
  Mat out = Mat::Zero(topo.n_A, topo.n_A);
  for (int s = 0; s < topo.num_subdomains(); ++s) {
    const auto& map = topo.a_maps[static_cast<std::size_t>(s)];
    const Mat& S = schur_[static_cast<std::size_t>(s)];
    for (std::size_t a = 0; a < map.size(); ++a)
      for (std::size_t b = 0; b < map.size(); ++b)
        out(map[a], map[b]) += S(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  return out;
}

LinearOperator BddOperator::as_operator() const {
  return [this](const Vec& x) { return apply(x); };
}

LinearOperator BddOperator::as_preconditioner() const {
  return [this](const Vec& r) { return precondition(r); };
}

RitzPairs ritz_pairs(const KrylovReport& report) {
  RitzPairs out;
  const auto k = static_cast<Eigen::Index>(report.alphas.size());
  if (k == 0) return out;
  Mat T = Mat::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double a = report.alphas[static_cast<std::size_t>(j)];
    T(j, j) = 1.0 / a;
    if (j > 0) {
      const double ap = report.alphas[static_cast<std::size_t>(j - 1)];
      const double bp = report.betas[static_cast<std::size_t>(j - 1)];
      T(j, j) += bp / ap;
      T(j, j - 1) = T(j - 1, j) = std::sqrt(bp) / ap;
    }
  }
  const Eigen::SelfAdjointEigenSolver<Mat> eig(T);
  out.values = eig.eigenvalues();
  out.vectors = report.lanczos * eig.eigenvectors();
  const double next = static_cast<std::size_t>(k) <= report.betas.size()
                          ? std::sqrt(report.betas[static_cast<std::size_t>(k - 1)]) /
                                report.alphas[static_cast<std::size_t>(k - 1)]
                          : 0.0;
  out.residuals = (next * eig.eigenvectors().row(k - 1)).cwiseAbs().transpose();
  return out;
}

namespace {

// Modified Gram-Schmidt in the S inner product. Columns whose S-norm falls
// below `drop` times their initial S-norm are removed; returns the number
// removed.
int s_orthonormalize(Mat& W, const LinearOperator& op, const Mat* against_basis,
                     const Mat* against_op_basis, double drop) {
  Mat kept(W.rows(), 0);
  Mat kept_op(W.rows(), 0);
  int removed = 0;
  for (Eigen::Index c = 0; c < W.cols(); ++c) {
    Vec w = W.col(c);
    Vec sw = op(w);
    const double initial = std::sqrt(std::max(w.dot(sw), 0.0));
    if (against_basis && against_basis->cols() > 0) {
      // S-orthogonal projection against an S-orthonormal or Galerkin-solved basis.
      const Mat& Z = *against_basis;
      const Mat& SZ = *against_op_basis;
      const Mat C = Z.transpose() * SZ;
      const Vec coef = C.ldlt().solve(Vec(SZ.transpose() * w));
      w -= Z * coef;
      sw -= SZ * coef;
    }
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index q = 0; q < kept.cols(); ++q) {
        const double coef = kept_op.col(q).dot(w);
        w -= coef * kept.col(q);
        sw -= coef * kept_op.col(q);
      }
    const double norm = std::sqrt(std::max(w.dot(sw), 0.0));
    if (!(initial > 0.0) || !(norm > drop * initial)) {
      ++removed;
      continue;
    }
    kept.conservativeResize(Eigen::NoChange, kept.cols() + 1);
    kept_op.conservativeResize(Eigen::NoChange, kept_op.cols() + 1);
    kept.col(kept.cols() - 1) = w / norm;
    kept_op.col(kept_op.cols() - 1) = sw / norm;
  }
  W = kept;
  return removed;
}

} // namespace

int srks_extract(const KrylovReport& report, const LinearOperator& op, RitzStore& store) {
  if (!(store.theta > 0.0)) return 0;
  const auto pairs = ritz_pairs(report);
  std::vector<Eigen::Index> selected;
  for (Eigen::Index i = 0; i < pairs.values.size(); ++i)
    if (pairs.residuals[i] < store.theta * std::abs(pairs.values[i])) selected.push_back(i);
  if (selected.empty()) return 0;
  Mat W(report.lanczos.rows(), store.size() + static_cast<Eigen::Index>(selected.size()));
  if (store.size() > 0) W.leftCols(store.size()) = store.vectors;
  std::vector<double> values = store.values;
  for (std::size_t k = 0; k < selected.size(); ++k) {
    W.col(store.size() + static_cast<Eigen::Index>(k)) = pairs.vectors.col(selected[k]);
    values.push_back(pairs.values[selected[k]]);
  }
  // Evict the oldest vectors beyond the capacity.
  const Eigen::Index excess = W.cols() - store.capacity;
  if (excess > 0) {
    W = W.rightCols(store.capacity).eval();
    values.erase(values.begin(), values.begin() + excess);
  }
  // Keep track of which values survive the orthonormalization.
  Mat kept(W.rows(), 0);
  std::vector<double> kept_values;
  Mat kept_op(W.rows(), 0);
  for (Eigen::Index c = 0; c < W.cols(); ++c) {
    Mat one = W.col(c);
    Mat basis = kept;
    const int removed = s_orthonormalize(one, op, &basis, &kept_op, 1e-6);
    if (removed) continue;
    kept.conservativeResize(Eigen::NoChange, kept.cols() + 1);
    kept.col(kept.cols() - 1) = one.col(0);
    kept_op.conservativeResize(Eigen::NoChange, kept_op.cols() + 1);
    kept_op.col(kept_op.cols() - 1) = op(one.col(0));
    kept_values.push_back(values[static_cast<std::size_t>(c)]);
  }
  store.vectors = kept;
  store.values = kept_values;
  return static_cast<int>(selected.size());
}

Deflation srks_augment(const BddOperator& bdd, const RitzStore& store, int* pruned) {
  const auto op = bdd.as_operator();
  Mat W = store.vectors;
  const int removed = s_orthonormalize(W, op, &bdd.coarse().basis(),
                                       &bdd.coarse().operator_basis(), 1e-6);
  if (pruned) *pruned = removed;
  Mat Z(bdd.size(), bdd.coarse_basis().cols() + W.cols());
  Z << bdd.coarse_basis(), W;
  return Deflation(std::move(Z), op);
}

Vec bdd_solve(const BddOperator& bdd, const Vec& rhs, const KrylovOptions& options,
              KrylovReport& report, const RitzStore* store) {
  if (store && store->size() > 0) {
    int pruned = 0;
    const Deflation augmented = srks_augment(bdd, *store, &pruned);
    Vec x = projected_pcg(bdd.as_operator(), bdd.as_preconditioner(), &augmented, rhs,
                          options, report);
    report.pruned = pruned;
    return x;
  }
  return projected_pcg(bdd.as_operator(), bdd.as_preconditioner(), &bdd.coarse(), rhs,
                       options, report);
}

RecoveredFields recover_fields(const Vec& dv, std::span<const Vec> b_m,
                               std::span<const SubdomainSystem> subdomains,
                               const InterfaceTopology& topology,
                               std::span<const Mat> schur, std::span<const Impedance> Q,
                               std::span<const RobinFactorization> factors) {
  const int ns = topology.num_subdomains();
  RecoveredFields out;
  out.dmu.resize(static_cast<std::size_t>(ns));
  out.du.resize(static_cast<std::size_t>(ns));
  out.du_b.resize(static_cast<std::size_t>(ns));
  out.dlambda.resize(static_cast<std::size_t>(ns));
  parallel_for(ns, [&](int s) {
    const auto i = static_cast<std::size_t>(s);
    const Vec x = b_m[i] - topology.restrict_to(s, dv);
    out.dmu[i] = schur[i] * x + Q[i].apply(x);
    out.du[i] = factors[i].solve(subdomains[i].extend(out.dmu[i]));
    out.du_b[i] = subdomains[i].trace(out.du[i]);
    out.dlambda[i] = out.dmu[i] - Q[i].apply(out.du_b[i]);
  });
  return out;
}

std::vector<Vec> robin_exchange(const InterfaceTopology& topology,
                                std::span<const Impedance> Q,
                                std::span<const Vec> u_b, std::span<const Vec> lambda) {
  const Vec u_sum = topology.assemble(u_b);
  const Vec l_sum = topology.assemble(lambda);
  const int ns = topology.num_subdomains();
  std::vector<Vec> out(static_cast<std::size_t>(ns));
  for (int s = 0; s < ns; ++s) {
    const auto i = static_cast<std::size_t>(s);
    const auto& map = topology.a_maps[i];
    Vec ubar(static_cast<Eigen::Index>(map.size()));
    Vec lbar(static_cast<Eigen::Index>(map.size()));
    for (std::size_t k = 0; k < map.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const int m = topology.multiplicity[static_cast<std::size_t>(map[k])];
      ubar[kk] = (u_sum[map[k]] - u_b[i][kk]) / (m - 1);
      lbar[kk] = l_sum[map[k]] - lambda[i][kk];
    }
    out[i] = Q[i].apply(ubar) - lbar;
  }
  return out;
}

Vec gmres(const LinearOperator& op, const Vec& b, const Vec& x0,
          const KrylovOptions& options, KrylovReport& report) {
  report = KrylovReport{};
  const auto n = b.size();
  const int cap = options.max_iterations < 0 ? static_cast<int>(n) : options.max_iterations;
  const double bnorm = b.norm();
  if (bnorm == 0.0 && x0.norm() == 0.0) {
    report.residuals.push_back(0.0);
    return Vec::Zero(n);
  }
  const double scale = bnorm > 0.0 ? bnorm : 1.0;
  const double tol = options.tolerance * scale;
  const Vec r0 = b - op(x0);
  const double beta = r0.norm();
  report.residuals.push_back(beta);
  if (beta <= tol) {
    report.relative_residual = beta / scale;
    return x0;
  }
  Mat V(n, 1);
  V.col(0) = r0 / beta;
  Mat H = Mat::Zero(cap + 1, cap);
  Vec g = Vec::Zero(cap + 1);
  g[0] = beta;
  std::vector<double> cs, sn;
  double best = beta;
  int best_at = 0;
  int k = 0;
  for (; k < cap;) {
    Vec w = op(V.col(k));
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= k; ++i) {
        const double h = V.col(i).dot(w);
        H(i, k) += h;
        w -= h * V.col(i);
      }
    const double hn = w.norm();
    H(k + 1, k) = hn;
    for (int i = 0; i < k; ++i) {
      const double t = cs[static_cast<std::size_t>(i)] * H(i, k) + sn[static_cast<std::size_t>(i)] * H(i + 1, k);
      H(i + 1, k) = -sn[static_cast<std::size_t>(i)] * H(i, k) + cs[static_cast<std::size_t>(i)] * H(i + 1, k);
      H(i, k) = t;
    }
    const double denom = std::hypot(H(k, k), H(k + 1, k));
    const double c = denom > 0.0 ? H(k, k) / denom : 1.0;
    const double s = denom > 0.0 ? H(k + 1, k) / denom : 0.0;
    cs.push_back(c);
    sn.push_back(s);
    H(k, k) = c * H(k, k) + s * H(k + 1, k);
    H(k + 1, k) = 0.0;
    g[k + 1] = -s * g[k];
    g[k] = c * g[k];
    ++k;
    const double res = std::abs(g[k]);
    report.residuals.push_back(res);
    if (res < best) {
      best = res;
      best_at = k;
    }
    if (res <= tol || hn <= 1e-14 * beta) break;
    if (k - best_at >= options.stagnation_window)
      throw KrylovError("GMRES stagnated", k, report.residuals);
    V.conservativeResize(Eigen::NoChange, k + 1);
    V.col(k) = w / hn;
  }
  const Vec y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
  Vec x = x0 + V.leftCols(k) * y;
  report.iterations = k;
  const double true_res = (b - op(x)).norm();
  report.relative_residual = true_res / scale;
  if (!(report.residuals.back() <= tol) && !(true_res <= tol))
    throw KrylovError("GMRES: no convergence in " + std::to_string(cap) + " iterations", k,
                      report.residuals);
  return x;
}

std::vector<Vec> feti2lm_solve(const Feti2lmProblem& problem, const KrylovOptions& options,
                               KrylovReport& report, const std::vector<Vec>* initial_guess) {
  const auto& topo = *problem.topology;
  const int ns = topo.num_subdomains();
  std::vector<Eigen::Index> offset(static_cast<std::size_t>(ns) + 1, 0);
  for (int s = 0; s < ns; ++s)
    offset[static_cast<std::size_t>(s) + 1] = offset[static_cast<std::size_t>(s)] + problem.subdomains[static_cast<std::size_t>(s)].num_boundary();
  const Eigen::Index n = offset.back();
  auto split = [&](const Vec& x) {
    std::vector<Vec> parts(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s)
      parts[static_cast<std::size_t>(s)] = x.segment(offset[static_cast<std::size_t>(s)], offset[static_cast<std::size_t>(s) + 1] - offset[static_cast<std::size_t>(s)]);
    return parts;
  };
  auto join = [&](const std::vector<Vec>& parts) {
    Vec x(n);
    for (int s = 0; s < ns; ++s)
      x.segment(offset[static_cast<std::size_t>(s)], offset[static_cast<std::size_t>(s) + 1] - offset[static_cast<std::size_t>(s)]) = parts[static_cast<std::size_t>(s)];
    return x;
  };

  const LinearOperator op = [&](const Vec& xv) {
    const auto x = split(xv);
    std::vector<Vec> h(static_cast<std::size_t>(ns)), l(static_cast<std::size_t>(ns));
    parallel_for(ns, [&](int s) {
      const auto i = static_cast<std::size_t>(s);
      const auto& sub = problem.subdomains[i];
      h[i] = sub.trace(problem.factors[i].solve(sub.extend(x[i])));
      l[i] = x[i] - problem.Q[i].apply(h[i]);
    });
    return Vec(xv - join(robin_exchange(topo, problem.Q, h, l)));
  };

  auto e0 = robin_exchange(topo, problem.Q, problem.u_b0, problem.lambda0);
  for (int s = 0; s < ns; ++s) e0[static_cast<std::size_t>(s)] -= problem.mu0[static_cast<std::size_t>(s)];
  const Vec g = join(e0);
  const Vec x0 = initial_guess ? join(*initial_guess) : Vec::Zero(n);
  return split(gmres(op, g, x0, options, report));
}

RobinRobinResult robin_robin_stationary(std::span<const SubdomainSystem> subdomains,
                                        const InterfaceTopology& topology,
                                        std::span<const Impedance> Q,
                                        std::span<const Vec> offsets,
                                        const ScaledAssembly& scaled, double load_factor,
                                        const RobinRobinOptions& options,
                                        const std::vector<Vec>* initial_mu) {
  const int ns = topology.num_subdomains();
  RobinRobinResult out;
  out.u.resize(static_cast<std::size_t>(ns));
  out.u_b.resize(static_cast<std::size_t>(ns));
  out.lambda.resize(static_cast<std::size_t>(ns));
  out.mu.resize(static_cast<std::size_t>(ns));
  for (int s = 0; s < ns; ++s) {
    const auto i = static_cast<std::size_t>(s);
    out.u[i] = Vec::Zero(subdomains[i].num_free());
    out.mu[i] = initial_mu ? (*initial_mu)[i] : Vec::Zero(subdomains[i].num_boundary());
  }
  auto offset_of = [&](int s) -> const Vec* {
    return offsets.empty() ? nullptr : &offsets[static_cast<std::size_t>(s)];
  };
  for (int it = 1; it <= options.max_iterations; ++it) {
    parallel_for(ns, [&](int s) {
      const auto i = static_cast<std::size_t>(s);
      auto r = robin_nonlinear_solve(subdomains[i], out.mu[i], Q[i], load_factor, out.u[i],
                                     options.local, offset_of(s));
      out.u[i] = std::move(r.u);
      out.u_b[i] = std::move(r.u_b);
      out.lambda[i] = std::move(r.lambda_b);
    });
    out.iterations = it;
    out.jumps.push_back(jump_norm(topology, out.u_b));
    out.imbalances.push_back(topology.assemble(out.lambda).norm());
    if (out.jumps.back() <= options.jump_tolerance &&
        out.imbalances.back() <= options.balance_tolerance) {
      out.converged = true;
      return out;
    }
    if (out.jumps.back() > 10.0 * out.jumps.front() && out.jumps.front() > 0.0)
      throw DivergenceError("Robin-Robin iteration diverges", out.jumps);

    std::vector<Vec> weighted(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s)
      weighted[static_cast<std::size_t>(s)] = scaled.a_tilde[static_cast<std::size_t>(s)].cwiseProduct(out.u_b[static_cast<std::size_t>(s)]);
    const Vec u_avg = topology.assemble(weighted);
    const Vec l_sum = topology.assemble(out.lambda);
    for (int s = 0; s < ns; ++s) {
      const auto i = static_cast<std::size_t>(s);
      const Vec ubar = topology.restrict_to(s, u_avg);
      const Vec lbar = out.lambda[i] - scaled.a_tilde[i].cwiseProduct(topology.restrict_to(s, l_sum));
      out.mu[i] = Q[i].apply(ubar) + lbar;
      if (const Vec* c = offset_of(s)) out.mu[i] += *c;
    }
  }
  return out;
}

} // namespace mixdd
