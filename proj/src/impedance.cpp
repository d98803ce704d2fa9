#include "mixdd/impedance.hpp"

#include "mixdd/schur.hpp"

#include <map>

namespace mixdd {

ImpedanceKind parse_impedance(const std::string& name) {
  if (name == "lumped") return ImpedanceKind::Lumped;
  if (name == "superlumped") return ImpedanceKind::Superlumped;
  if (name == "two-scale") return ImpedanceKind::TwoScale;
  if (name == "exact-complement") return ImpedanceKind::ExactComplement;
  throw ConfigError("unknown impedance '" + name +
                    "' (expected lumped, superlumped, two-scale or exact-complement)");
}

std::string to_string(ImpedanceKind kind) {
  switch (kind) {
  case ImpedanceKind::Lumped: return "lumped";
  case ImpedanceKind::Superlumped: return "superlumped";
  case ImpedanceKind::TwoScale: return "two-scale";
  case ImpedanceKind::ExactComplement: return "exact-complement";
  }
  return "?";
}

Vec Impedance::apply(const Vec& x) const {
  Vec y = sparse * x;
  if (has_low_rank()) y -= W * M.ldlt().solve(Vec(W.transpose() * x));
  return y;
}

Mat Impedance::dense() const {
  Mat Q = Mat(sparse);
  if (has_low_rank()) Q -= W * M.ldlt().solve(Mat(W.transpose()));
  return Q;
}

namespace {

// Gamma_A index -> boundary position of subdomain j (or -1).
std::vector<int> positions_of(int j, const InterfaceTopology& topology) {
  std::vector<int> pos(static_cast<std::size_t>(topology.n_A), -1);
  const auto& map = topology.a_maps[static_cast<std::size_t>(j)];
  for (std::size_t k = 0; k < map.size(); ++k) pos[static_cast<std::size_t>(map[k])] = static_cast<int>(k);
  return pos;
}

void require_neighbors(int j, const InterfaceTopology& topology) {
  if (topology.neighbors[static_cast<std::size_t>(j)].empty())
    throw ImpedanceError("impedance: subdomain " + std::to_string(j) + " has no neighbor");
}

} // namespace

Impedance lumped_neighbor(int j, const InterfaceTopology& topology,
                          std::span<const SpMat> boundary_blocks) {
  require_neighbors(j, topology);
  const auto pos = positions_of(j, topology);
  std::vector<Triplet> triplets;
  for (int s : topology.neighbors[static_cast<std::size_t>(j)]) {
    const auto& map = topology.a_maps[static_cast<std::size_t>(s)];
    const SpMat& K = boundary_blocks[static_cast<std::size_t>(s)];
    for (int c = 0; c < K.outerSize(); ++c)
      for (SpMat::InnerIterator it(K, c); it; ++it) {
        const int a = pos[static_cast<std::size_t>(map[static_cast<std::size_t>(it.row())])];
        const int b = pos[static_cast<std::size_t>(map[static_cast<std::size_t>(it.col())])];
        if (a >= 0 && b >= 0) triplets.emplace_back(a, b, it.value());
      }
  }
  const int n = static_cast<int>(topology.a_maps[static_cast<std::size_t>(j)].size());
  Impedance q;
  q.sparse.resize(n, n);
  q.sparse.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

Impedance superlumped_neighbor(int j, const InterfaceTopology& topology,
                               std::span<const Vec> boundary_diagonals) {
  require_neighbors(j, topology);
  const auto pos = positions_of(j, topology);
  const int n = static_cast<int>(topology.a_maps[static_cast<std::size_t>(j)].size());
  Vec diag = Vec::Zero(n);
  for (int s : topology.neighbors[static_cast<std::size_t>(j)]) {
    const auto& map = topology.a_maps[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < map.size(); ++k) {
      const int a = pos[static_cast<std::size_t>(map[k])];
      if (a >= 0) diag[a] += boundary_diagonals[static_cast<std::size_t>(s)][static_cast<Eigen::Index>(k)];
    }
  }
  Impedance q;
  q.sparse.resize(n, n);
  std::vector<Triplet> triplets;
  for (int a = 0; a < n; ++a) triplets.emplace_back(a, a, diag[a]);
  q.sparse.setFromTriplets(triplets.begin(), triplets.end());
  return q;
}

Impedance two_scale(int j, const InterfaceTopology& topology,
                    const ScaledAssembly& scaled, const Impedance& superlumped,
                    const Mat& coarse_basis, std::span<const int> column_owner,
                    const Mat& coarse_inverse) {
  const auto& map = topology.a_maps[static_cast<std::size_t>(j)];
  const auto n = static_cast<Eigen::Index>(map.size());
  // Columns of the other subdomains' modes that do not vanish on Gamma_j.
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < coarse_basis.cols(); ++c) {
    if (column_owner[static_cast<std::size_t>(c)] == j) continue;
    double norm = 0.0;
    for (int g : map) norm += coarse_basis(g, c) * coarse_basis(g, c);
    if (norm > 0.0) cols.push_back(c);
  }
  Impedance q = superlumped;
  if (cols.empty()) return q;

  const auto m = static_cast<Eigen::Index>(cols.size());
  Mat V(n, m);
  Mat F(m, m);
  const Vec& d = scaled.d_tilde[static_cast<std::size_t>(j)];
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index k = 0; k < n; ++k) V(k, a) = d[k] * coarse_basis(map[static_cast<std::size_t>(k)], cols[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) F(a, b) = coarse_inverse(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
  }
  const Eigen::LLT<Mat> f_llt(0.5 * (F + F.transpose()));
  if (f_llt.info() != Eigen::Success) throw ImpedanceError("two_scale: singular coarse flexibility block");
  const Mat Finv = f_llt.solve(Mat::Identity(m, m));
  q.W = superlumped.sparse * V;
  q.M = Finv + V.transpose() * q.W;
  q.M = 0.5 * (q.M + q.M.transpose()).eval();
  return q;
}

AffineImpedance exact_complement(int j, const Partition& partition,
                                 std::span<const SpMat> tangents,
                                 std::span<const Vec> residuals) {
  const auto& topo = partition.topology;
  // Global numbering of the complement's free dofs.
  std::map<int, int> index;
  for (const auto& sub : partition.subdomains) {
    if (sub.id == j) continue;
    for (int l : sub.free_dofs) index.emplace(sub.global_dof(l), 0);
  }
  int next = 0;
  for (auto& [g, i] : index) i = next++;

  std::vector<Triplet> triplets;
  Vec r = Vec::Zero(next);
  for (const auto& sub : partition.subdomains) {
    if (sub.id == j) continue;
    std::vector<int> to(sub.free_dofs.size());
    for (std::size_t l = 0; l < sub.free_dofs.size(); ++l) to[l] = index.at(sub.global_dof(sub.free_dofs[l]));
    const SpMat& K = tangents[static_cast<std::size_t>(sub.id)];
    for (int c = 0; c < K.outerSize(); ++c)
      for (SpMat::InnerIterator it(K, c); it; ++it)
        triplets.emplace_back(to[static_cast<std::size_t>(it.row())], to[static_cast<std::size_t>(it.col())], it.value());
    const Vec& rs = residuals[static_cast<std::size_t>(sub.id)];
    for (std::size_t l = 0; l < to.size(); ++l) r[to[l]] += rs[static_cast<Eigen::Index>(l)];
  }
  SpMat K(next, next);
  K.setFromTriplets(triplets.begin(), triplets.end());

  std::vector<int> boundary;
  std::vector<char> is_boundary(static_cast<std::size_t>(next), 0);
  for (int g : topo.a_maps[static_cast<std::size_t>(j)]) {
    const auto it = index.find(topo.global_dof[static_cast<std::size_t>(g)]);
    if (it == index.end()) throw ImpedanceError("exact_complement: boundary dof missing from complement");
    boundary.push_back(it->second);
    is_boundary[static_cast<std::size_t>(it->second)] = 1;
  }
  std::vector<int> interior;
  for (int i = 0; i < next; ++i)
    if (!is_boundary[static_cast<std::size_t>(i)]) interior.push_back(i);

  SchurOperator S;
  try {
    S = SchurOperator(K, boundary, interior);
  } catch (const FactorizationError&) {
    throw ImpedanceError("exact_complement: complement of subdomain " + std::to_string(j) +
                         " is singular (Dirichlet conditions concentrated on it?)");
  }
  AffineImpedance out;
  const Mat dense = S.dense();
  const Vec eig = Eigen::SelfAdjointEigenSolver<Mat>(dense, Eigen::EigenvaluesOnly).eigenvalues();
  if (eig.size() > 0 && !(eig.minCoeff() > 1e-12 * eig.cwiseAbs().maxCoeff()))
    throw ImpedanceError("exact_complement: complement of subdomain " + std::to_string(j) +
                         " is singular (Dirichlet conditions concentrated on it?)");
  out.Q.sparse = dense.sparseView();
  // Reaction of the complement on Gamma_j: S u_b - (r_b - K_bi K_ii^-1 r_i).
  out.constant = -S.condense(r);
  return out;
}

} // namespace mixdd
