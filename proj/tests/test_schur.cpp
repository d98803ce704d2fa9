#include "mixdd/schur.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace mixdd;
using mixdd::testing::rect_mesh;

namespace {

const Material kElastic = Material::elastic(210e6, 0.3);
const Material kSteel = Material::elastoplastic(210e6, 0.3, 420e3, 1e3);

SpMat to_sparse(const Mat& m) { return m.sparseView(); }

std::vector<int> iota(int from, int to) {
  std::vector<int> v;
  for (int i = from; i < to; ++i) v.push_back(i);
  return v;
}

Impedance diagonal_impedance(int n, double value) {
  Impedance q;
  q.sparse = to_sparse(value * Mat::Identity(n, n));
  return q;
}

} // namespace

TEST(PrimalSchur, NoInteriorGivesBoundaryBlock) {
  std::mt19937 rng(1);
  const Mat K = mixdd::testing::random_spd(5, rng);
  const auto b = iota(0, 5);
  EXPECT_LE((primal_schur(to_sparse(K), b, {}) - K).norm(), 1e-14 * K.norm());
}

TEST(PrimalSchur, SpringChainHandElimination) {
  const double k = 3.0;
  Mat K(3, 3);
  K << 2 * k, -k, 0, -k, 2 * k, -k, 0, -k, 2 * k;
  const std::vector<int> b{0, 2}, i{1};
  Mat expected(2, 2);
  expected << 1.5 * k, -0.5 * k, -0.5 * k, 1.5 * k;
  EXPECT_LE((primal_schur(to_sparse(K), b, i) - expected).norm(), 1e-14);
}

TEST(PrimalSchur, RandomSpdMatchesDenseElimination) {
  std::mt19937 rng(2);
  const Mat K = mixdd::testing::random_spd(12, rng);
  const std::vector<int> b{1, 4, 7, 10}, i{0, 2, 3, 5, 6, 8, 9, 11};
  Mat Kbb(4, 4), Kbi(4, 8), Kii(8, 8);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) Kbb(r, c) = K(b[r], b[c]);
    for (int c = 0; c < 8; ++c) Kbi(r, c) = K(b[r], i[c]);
  }
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) Kii(r, c) = K(i[r], i[c]);
  const Mat S = Kbb - Kbi * Kii.inverse() * Kbi.transpose();
  EXPECT_LE((primal_schur(to_sparse(K), b, i) - S).norm(), 1e-10 * S.norm());
}

TEST(PrimalSchur, SchurOperatorApplyMatchesDense) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  const SchurOperator S(lt.K, sub.boundary_dofs, sub.interior_dofs);
  std::mt19937 rng(3);
  const Vec x = mixdd::testing::random_vec(S.size(), rng);
  const Mat Sd = S.dense();
  EXPECT_LE((S.apply(x) - Sd * x).norm(), 1e-10 * (Sd * x).norm());
  EXPECT_LE((Sd - Sd.transpose()).norm(), 1e-12 * Sd.norm());
  // Floating subdomain: the rigid traces span the null space.
  const auto r = rigid_body_modes(sub);
  EXPECT_LE((Sd * r.boundary).norm(), 1e-8 * Sd.norm());
  const Eigen::SelfAdjointEigenSolver<Mat> eig(Sd);
  EXPECT_GT(eig.eigenvalues()[3], 1e-8 * eig.eigenvalues().maxCoeff());
}

TEST(DirichletToNeumann, LinearZeroLoadIsSchurComplement) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  std::mt19937 rng(4);
  const Vec ub = mixdd::testing::random_vec(sub.num_boundary(), rng, 1e-4);
  const auto d = dirichlet_to_neumann(sub, ub, 0.0, {1e-6, 5});
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  const Vec expected = primal_schur(lt.K, sub.boundary_dofs, sub.interior_dofs) * ub;
  EXPECT_LE((d.lambda_b - expected).norm(), 1e-10 * expected.norm());
}

TEST(DirichletToNeumann, RigidTraceGivesNoReaction) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto r = rigid_body_modes(sub);
  const Vec ub = 1e-3 * (r.boundary.col(0) + r.boundary.col(2));
  const auto d = dirichlet_to_neumann(sub, ub, 0.0, {1e-6, 5});
  EXPECT_LE(d.lambda_b.norm(), 1e-6);
  const Vec ext = d.u - 1e-3 * (r.full.col(0) + r.full.col(2));
  EXPECT_LE(ext.norm(), 1e-12);
}

TEST(DirichletToNeumann, AffineConstantIndependentOfTrace) {
  Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  for (int n = 0; n < m.num_nodes(); ++n) m.neumann[2 * n + 1] = -1e3;
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  std::mt19937 rng(5);
  const Vec u1 = mixdd::testing::random_vec(sub.num_boundary(), rng, 1e-4);
  const Vec u2 = mixdd::testing::random_vec(sub.num_boundary(), rng, 1e-4);
  const NewtonOptions opt{1e-6, 5};
  const Vec c1 = dirichlet_to_neumann(sub, u1, 1.0, opt).lambda_b - dirichlet_to_neumann(sub, u1, 0.0, opt).lambda_b;
  const Vec c2 = dirichlet_to_neumann(sub, u2, 1.0, opt).lambda_b - dirichlet_to_neumann(sub, u2, 0.0, opt).lambda_b;
  EXPECT_GT(c1.norm(), 0.0);
  EXPECT_LE((c1 - c2).norm(), 1e-8 * c1.norm());
}

TEST(DirichletToNeumann, PlasticMatchesMonolithicLocalSolve) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kSteel);
  const auto p = partition_mesh(m, SlabStrategy{3});
  SubdomainSystem sub = p.subdomains[1];
  const auto& lm = sub.local_mesh;

  // Bending-like boundary pattern, ramped in three committed steps.
  Vec pattern(sub.num_boundary());
  for (int k = 0; k < sub.num_boundary(); ++k) {
    const int l = sub.free_dofs[static_cast<std::size_t>(sub.boundary_dofs[static_cast<std::size_t>(k)])];
    const auto& q = lm.nodes[static_cast<std::size_t>(l / 2)];
    const double side = q[0] < 1.5 ? -1.0 : 1.0;
    pattern[k] = (l % 2 == 0) ? side * (q[1] - 0.5) * 4e-3 : 0.0;
  }
  std::vector<GaussPointState> mono_states = sub.gauss_states;
  Vec u_guess = Vec::Zero(sub.num_free());
  double plastic = 0.0;
  for (double lf : {0.4, 0.8, 1.2}) {
    const Vec ub = lf * pattern;
    const auto d = dirichlet_to_neumann(sub, ub, 0.0, {1e-6, 25}, &u_guess);

    // Oracle: Newton on the full local mesh with u_b imposed by elimination.
    std::map<int, double> bc;
    for (int k = 0; k < sub.num_boundary(); ++k)
      bc[sub.free_dofs[static_cast<std::size_t>(sub.boundary_dofs[static_cast<std::size_t>(k)])]] = ub[k];
    Vec u = sub.full_displacement(u_guess, 0.0);
    for (int it = 0; it < 30; ++it) {
      const auto a = assemble(lm, mono_states, u);
      Vec r = a.f_int;
      std::map<int, double> incr;
      for (const auto& [dof, v] : bc) incr[dof] = v - u[dof];
      const auto c = apply_dirichlet(a.K_t, r, incr);
      const Vec du = Eigen::SimplicialLDLT<SpMat>(c.K).solve(c.rhs);
      u += du;
      if (du.norm() <= 1e-14 * u.norm()) break;
    }
    const auto a = assemble(lm, mono_states, u);
    Vec reaction(sub.num_boundary());
    for (int k = 0; k < sub.num_boundary(); ++k)
      reaction[k] = -a.f_int[sub.free_dofs[static_cast<std::size_t>(sub.boundary_dofs[static_cast<std::size_t>(k)])]];
    EXPECT_LE((d.lambda_b - reaction).norm(), 1e-8 * reaction.norm()) << "load " << lf;

    mono_states = a.trial_states;
    sub.gauss_states = d.trial_states;
    u_guess = d.u;
    plastic = 0.0;
    for (const auto& s : sub.gauss_states) plastic += s.accumulated_plastic;
  }
  EXPECT_GT(plastic, 0.0);
}

TEST(RobinFactorization, PurelySparseMatchesDirectSolve) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  const Impedance Q = diagonal_impedance(sub.num_boundary(), 1e8);
  const RobinFactorization f(lt.K, sub.boundary_dofs, Q);
  Mat Kt = Mat(lt.K);
  for (int k = 0; k < sub.num_boundary(); ++k) Kt(sub.boundary_dofs[static_cast<std::size_t>(k)], sub.boundary_dofs[static_cast<std::size_t>(k)]) += 1e8;
  std::mt19937 rng(6);
  const Vec rhs = mixdd::testing::random_vec(sub.num_free(), rng);
  const Vec x = Kt.ldlt().solve(rhs);
  EXPECT_LE((f.solve(rhs) - x).norm(), 1e-12 * x.norm() * 10);
}

TEST(RobinFactorization, RankOneCorrectionMatchesDenseInverse) {
  std::mt19937 rng(7);
  const Mat K = mixdd::testing::random_spd(10, rng);
  const std::vector<int> boundary{2, 5, 7, 9};
  Impedance Q;
  Q.sparse = to_sparse(5.0 * Mat::Identity(4, 4));
  Q.W = mixdd::testing::random_vec(4, rng);
  Q.M = Mat::Constant(1, 1, 4.0);
  Mat full = K;
  const Mat q = Q.dense();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) full(boundary[static_cast<std::size_t>(a)], boundary[static_cast<std::size_t>(b)]) += q(a, b);
  const RobinFactorization f(to_sparse(K), boundary, Q);
  const Vec rhs = mixdd::testing::random_vec(10, rng);
  const Vec x = full.inverse() * rhs;
  EXPECT_LE((f.solve(rhs) - x).norm(), 1e-10 * x.norm());
}

TEST(RobinFactorization, InadmissibleImpedanceThrows) {
  std::mt19937 rng(8);
  const Mat K = mixdd::testing::random_spd(6, rng);
  Impedance Q;
  Q.sparse = to_sparse(Mat::Identity(2, 2));
  Q.W = Mat::Constant(2, 1, 100.0);
  Q.M = Mat::Constant(1, 1, 1e-2);
  EXPECT_THROW(RobinFactorization(to_sparse(K), std::vector<int>{0, 3}, Q), ImpedanceError);
}

TEST(RobinFactorization, TangentIdentityWithLowRank) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 3, kElastic);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  const Mat S = primal_schur(lt.K, sub.boundary_dofs, sub.interior_dofs);
  std::mt19937 rng(9);
  Impedance Q;
  Q.sparse = to_sparse(Mat(S.diagonal().asDiagonal()));
  Q.W.resize(sub.num_boundary(), 2);
  for (int c = 0; c < 2; ++c) Q.W.col(c) = Q.sparse * mixdd::testing::random_vec(sub.num_boundary(), rng, 1e-3);
  Q.M = Mat::Identity(2, 2) + Q.W.transpose() * Mat(Q.sparse).inverse() * Q.W;
  const RobinFactorization f(lt.K, sub.boundary_dofs, Q);
  Mat H(sub.num_boundary(), sub.num_boundary());
  for (int k = 0; k < sub.num_boundary(); ++k) H.col(k) = sub.trace(f.solve(sub.extend(Vec::Unit(sub.num_boundary(), k))));
  const Mat expected = (S + Q.dense()).inverse();
  EXPECT_LE((H - expected).norm(), 1e-10 * expected.norm());
}

TEST(RobinSolve, LinearConvergesInOneIteration) {
  Mesh m = rect_mesh(3.0, 1.0, 6, 2, kElastic);
  for (int n = 0; n < m.num_nodes(); ++n) m.neumann[2 * n + 1] = -1e2;
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  Impedance Q;
  Q.sparse = to_sparse(Mat(primal_schur(lt.K, sub.boundary_dofs, sub.interior_dofs).diagonal().asDiagonal()));
  std::mt19937 rng(10);
  const Vec mu = mixdd::testing::random_vec(sub.num_boundary(), rng, 1e3);
  const auto r = robin_nonlinear_solve(sub, mu, Q, 1.0, Vec::Zero(sub.num_free()), {1e-6, 25});
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE((r.lambda_b + Q.apply(r.u_b) - mu).norm(), 1e-12 * mu.norm());
}

TEST(RobinSolve, ZeroDataStaysAtRest) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 2, kSteel);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto r = robin_nonlinear_solve(sub, Vec::Zero(sub.num_boundary()),
                                       diagonal_impedance(sub.num_boundary(), 1e8), 1.0,
                                       Vec::Zero(sub.num_free()), {1e-6, 25});
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.u.norm(), 0.0);
}

TEST(RobinSolve, PlasticBendingReachesTolerance) {
  const Mesh m = rect_mesh(3.0, 1.0, 6, 4, kSteel);
  const auto p = partition_mesh(m, SlabStrategy{3});
  const auto& sub = p.subdomains[1];
  const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 0.0);
  Impedance Q;
  Q.sparse = to_sparse(Mat(primal_schur(lt.K, sub.boundary_dofs, sub.interior_dofs).diagonal().asDiagonal()));
  Vec mu(sub.num_boundary());
  for (int k = 0; k < sub.num_boundary(); ++k) {
    const int l = sub.free_dofs[static_cast<std::size_t>(sub.boundary_dofs[static_cast<std::size_t>(k)])];
    const auto& q = sub.local_mesh.nodes[static_cast<std::size_t>(l / 2)];
    const double side = q[0] < 1.5 ? -1.0 : 1.0;
    mu[k] = (l % 2 == 0) ? side * (q[1] - 0.5) * 1e6 : 0.0;
  }
  const double tol = 1e-6 * mu.norm();
  const auto r = robin_nonlinear_solve(sub, mu, Q, 0.0, Vec::Zero(sub.num_free()), {tol, 25});
  EXPECT_GT(r.iterations, 1);
  EXPECT_LE(r.history.back(), tol);
  double plastic = 0.0;
  for (const auto& s : r.trial_states) plastic += s.accumulated_plastic;
  EXPECT_GT(plastic, 0.0);
  EXPECT_LE((r.lambda_b + Q.apply(r.u_b) - mu).norm(), 1e-12 * mu.norm());
}

TEST(CondensedRhs, OperatorPathMatchesDense) {
  Mesh m = rect_mesh(2.0, 1.0, 4, 2, kElastic);
  mixdd::testing::clamp_and_pull(m, 2.0, 1e-3);
  const auto p = partition_mesh(m, SlabStrategy{2});
  std::vector<SchurOperator> S;
  std::vector<Impedance> Q;
  std::vector<Vec> ub, mu;
  std::mt19937 rng(11);
  for (const auto& sub : p.subdomains) {
    const auto lt = local_tangent(sub, Vec::Zero(sub.num_free()), 1.0);
    S.emplace_back(lt.K, sub.boundary_dofs, sub.interior_dofs);
    Q.push_back(diagonal_impedance(sub.num_boundary(), 3e8));
    ub.push_back(mixdd::testing::random_vec(sub.num_boundary(), rng, 1e-4));
    mu.push_back(mixdd::testing::random_vec(sub.num_boundary(), rng, 1e4));
  }
  const AssembledImpedance aqa(p.topology, Q);
  const auto c = condensed_rhs(p.topology, aqa, ub, mu, Q,
                               [&](int s, const Vec& x) { return S[static_cast<std::size_t>(s)].apply(x); });
  // Dense oracle.
  const Vec amu = p.topology.assemble(mu);
  const Vec v0 = aqa.matrix().inverse() * amu;
  for (int s = 0; s < 2; ++s) {
    const Vec bm = p.topology.restrict_to(s, v0) - ub[static_cast<std::size_t>(s)];
    const Vec bp = (S[static_cast<std::size_t>(s)].dense() + Q[static_cast<std::size_t>(s)].dense()) * bm;
    EXPECT_LE((c.b_m[static_cast<std::size_t>(s)] - bm).norm(), 1e-10 * bm.norm());
    EXPECT_LE((c.b_p[static_cast<std::size_t>(s)] - bp).norm(), 1e-10 * bp.norm());
  }
}

TEST(CondensedRhs, ConsistentMixedUnknownGivesZero) {
  const Mesh m = rect_mesh(2.0, 2.0, 4, 4, kElastic);
  const auto p = partition_mesh(m, GridStrategy{2, 2});
  std::mt19937 rng(12);
  const auto ub = p.topology.restrict_all(mixdd::testing::random_vec(p.topology.n_A, rng));
  // Balanced reactions: random local values minus their assembled mean.
  std::vector<Vec> lambda;
  for (const auto& sub : p.subdomains) lambda.push_back(mixdd::testing::random_vec(sub.num_boundary(), rng));
  const Vec sum = p.topology.assemble(lambda);
  for (int s = 0; s < p.num_subdomains(); ++s) {
    const auto& map = p.topology.a_maps[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < map.size(); ++k)
      lambda[static_cast<std::size_t>(s)][static_cast<Eigen::Index>(k)] -= sum[map[k]] / p.topology.multiplicity[static_cast<std::size_t>(map[k])];
  }
  std::vector<Impedance> Q;
  std::vector<Vec> mu;
  for (int s = 0; s < p.num_subdomains(); ++s) {
    Q.push_back(diagonal_impedance(p.subdomains[static_cast<std::size_t>(s)].num_boundary(), 2.0 + s));
    mu.push_back(lambda[static_cast<std::size_t>(s)] + Q.back().apply(ub[static_cast<std::size_t>(s)]));
  }
  const AssembledImpedance aqa(p.topology, Q);
  const auto c = condensed_rhs(p.topology, aqa, ub, mu, Q, [](int, const Vec& x) { return Vec(x); });
  for (const auto& bm : c.b_m) EXPECT_LE(bm.norm(), 1e-12);
}
