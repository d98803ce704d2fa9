#include "mixdd/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

namespace mixdd {

Vec SubdomainSystem::full_displacement(const Vec& u_free, double load_factor) const {
  Vec full = local_mesh.dirichlet_lift(load_factor);
  for (int i = 0; i < num_free(); ++i) full[free_dofs[static_cast<std::size_t>(i)]] = u_free[i];
  return full;
}

Vec SubdomainSystem::to_free(const Vec& full) const {
  Vec out(num_free());
  for (int i = 0; i < num_free(); ++i) out[i] = full[free_dofs[static_cast<std::size_t>(i)]];
  return out;
}

Vec SubdomainSystem::trace(const Vec& u_free) const {
  Vec out(num_boundary());
  for (int i = 0; i < num_boundary(); ++i)
    out[i] = u_free[boundary_dofs[static_cast<std::size_t>(i)]];
  return out;
}

Vec SubdomainSystem::extend(const Vec& x_b) const {
  Vec out = Vec::Zero(num_free());
  for (int i = 0; i < num_boundary(); ++i)
    out[boundary_dofs[static_cast<std::size_t>(i)]] = x_b[i];
  return out;
}

Vec InterfaceTopology::assemble(std::span<const Vec> local) const {
  Vec out = Vec::Zero(n_A);
  for (std::size_t s = 0; s < a_maps.size(); ++s) {
    const auto& map = a_maps[s];
    for (std::size_t k = 0; k < map.size(); ++k) out[map[k]] += local[s][static_cast<Eigen::Index>(k)];
  }
  return out;
}

Vec InterfaceTopology::restrict_to(int s, const Vec& x) const {
  const auto& map = a_maps[static_cast<std::size_t>(s)];
  Vec out(static_cast<Eigen::Index>(map.size()));
  for (std::size_t k = 0; k < map.size(); ++k) out[static_cast<Eigen::Index>(k)] = x[map[k]];
  return out;
}

std::vector<Vec> InterfaceTopology::restrict_all(const Vec& x) const {
  std::vector<Vec> out;
  out.reserve(a_maps.size());
  for (int s = 0; s < num_subdomains(); ++s) out.push_back(restrict_to(s, x));
  return out;
}

namespace {

struct Box {
  double xmin, xmax, ymin, ymax;
};

Box bounding_box(const Mesh& mesh) {
  Box b{std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest(),
        std::numeric_limits<double>::max(), std::numeric_limits<double>::lowest()};
  for (const auto& p : mesh.nodes) {
    b.xmin = std::min(b.xmin, p[0]);
    b.xmax = std::max(b.xmax, p[0]);
    b.ymin = std::min(b.ymin, p[1]);
    b.ymax = std::max(b.ymax, p[1]);
  }
  return b;
}

int bin(double v, double lo, double hi, int n) {
  if (hi <= lo) return 0;
  const int k = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
  return std::clamp(k, 0, n - 1);
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using Edge = std::pair<int, int>;

std::vector<std::vector<int>> element_adjacency(const Mesh& mesh) {
  std::map<Edge, std::vector<int>> edges;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < 3; ++a) {
      int i = el[static_cast<std::size_t>(a)];
      int j = el[static_cast<std::size_t>((a + 1) % 3)];
      if (i > j) std::swap(i, j);
      edges[{i, j}].push_back(e);
    }
  }
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(mesh.num_elements()));
  for (const auto& [edge, els] : edges) {
    for (std::size_t p = 0; p < els.size(); ++p)
      for (std::size_t q = p + 1; q < els.size(); ++q) {
        adj[static_cast<std::size_t>(els[p])].push_back(els[q]);
        adj[static_cast<std::size_t>(els[q])].push_back(els[p]);
      }
  }
  return adj;
}

// True when the Dirichlet dofs touched by `elements` block every rigid motion.
bool rigidly_constrained(const Mesh& mesh, const std::vector<int>& elements) {
  std::vector<int> nodes;
  for (int e : elements)
    for (int a : mesh.elements[static_cast<std::size_t>(e)]) nodes.push_back(a);
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<Eigen::RowVector3d> rows;
  double scale = 0.0;
  for (int n : nodes) {
    const auto& p = mesh.nodes[static_cast<std::size_t>(n)];
    scale = std::max({scale, std::abs(p[0]), std::abs(p[1]), 1.0});
    if (mesh.dirichlet.count(2 * n)) rows.emplace_back(1.0, 0.0, -p[1]);
    if (mesh.dirichlet.count(2 * n + 1)) rows.emplace_back(0.0, 1.0, p[0]);
  }
  if (rows.size() < 3) return false;
  Mat C(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t r = 0; r < rows.size(); ++r) C.row(static_cast<Eigen::Index>(r)) = rows[r];
  Eigen::JacobiSVD<Mat> svd(C);
  return svd.singularValues()[2] > 1e-12 * scale;
}

// Each complement must be edge-connected, or split into pieces that are all
// held by Dirichlet conditions (slab chains clamped at both ends); in both
// cases the complement Schur complement stays invertible.
// Meshes without any Dirichlet dof (floating test pieces) are not checked.
void check_complements(const Mesh& mesh, const std::vector<int>& owner, int n_sub) {
  if (n_sub < 2 || mesh.dirichlet.empty()) return;
  const auto adj = element_adjacency(mesh);
  std::vector<int> component(owner.size());
  std::vector<int> stack;
  for (int j = 0; j < n_sub; ++j) {
    std::fill(component.begin(), component.end(), -1);
    std::vector<std::vector<int>> pieces;
    for (std::size_t e0 = 0; e0 < owner.size(); ++e0) {
      if (owner[e0] == j || component[e0] >= 0) continue;
      const int id = static_cast<int>(pieces.size());
      pieces.emplace_back();
      stack.assign(1, static_cast<int>(e0));
      component[e0] = id;
      while (!stack.empty()) {
        const int e = stack.back();
        stack.pop_back();
        pieces.back().push_back(e);
        for (int f : adj[static_cast<std::size_t>(e)]) {
          if (owner[static_cast<std::size_t>(f)] == j || component[static_cast<std::size_t>(f)] >= 0) continue;
          component[static_cast<std::size_t>(f)] = id;
          stack.push_back(f);
        }
      }
    }
    if (pieces.size() <= 1) continue;
    for (const auto& piece : pieces)
      if (!rigidly_constrained(mesh, piece))
        throw PartitionError("partition: complement of subdomain " + std::to_string(j) +
                             " is not connected and has a floating part");
  }
}

} // namespace

std::vector<int> element_owners(const Mesh& mesh, const PartitionStrategy& strategy) {
  const int ne = mesh.num_elements();
  std::vector<int> owner(static_cast<std::size_t>(ne), 0);
  const Box box = bounding_box(mesh);
  std::visit(overloaded{
                 [&](const SlabStrategy& s) {
                   if (s.n < 1) throw PartitionError("partition: slab count must be >= 1");
                   for (int e = 0; e < ne; ++e)
                     owner[static_cast<std::size_t>(e)] =
                         bin(mesh.element_centroid(e)[0], box.xmin, box.xmax, s.n);
                 },
                 [&](const GridStrategy& g) {
                   if (g.nx < 1 || g.ny < 1)
                     throw PartitionError("partition: grid counts must be >= 1");
                   for (int e = 0; e < ne; ++e) {
                     const auto c = mesh.element_centroid(e);
                     owner[static_cast<std::size_t>(e)] =
                         bin(c[0], box.xmin, box.xmax, g.nx) +
                         g.nx * bin(c[1], box.ymin, box.ymax, g.ny);
                   }
                 },
                 [&](const ExplicitStrategy& x) {
                   if (static_cast<int>(x.owner.size()) != ne)
                     throw PartitionError("partition: explicit owner list has wrong size");
                   for (int o : x.owner)
                     if (o < 0) throw PartitionError("partition: negative subdomain id");
                   owner = x.owner;
                 },
             },
             strategy);
  return owner;
}

Partition partition_mesh(const Mesh& mesh, const PartitionStrategy& strategy) {
  Partition part;
  part.element_owner = element_owners(mesh, strategy);
  const auto& owner = part.element_owner;
  int n_sub = 0;
  if (const auto* s = std::get_if<SlabStrategy>(&strategy)) n_sub = s->n;
  else if (const auto* g = std::get_if<GridStrategy>(&strategy)) n_sub = g->nx * g->ny;
  else
    for (int o : owner) n_sub = std::max(n_sub, o + 1);

  std::vector<std::vector<int>> sub_elements(static_cast<std::size_t>(n_sub));
  for (std::size_t e = 0; e < owner.size(); ++e)
    sub_elements[static_cast<std::size_t>(owner[e])].push_back(static_cast<int>(e));
  for (int s = 0; s < n_sub; ++s)
    if (sub_elements[static_cast<std::size_t>(s)].empty())
      throw PartitionError("partition: subdomain " + std::to_string(s) + " has no elements");
  check_complements(mesh, owner, n_sub);

  // Subdomains touching each node, sorted.
  std::vector<std::vector<int>> node_subs(static_cast<std::size_t>(mesh.num_nodes()));
  for (std::size_t e = 0; e < owner.size(); ++e)
    for (int a : mesh.elements[e]) {
      auto& subs = node_subs[static_cast<std::size_t>(a)];
      if (std::find(subs.begin(), subs.end(), owner[e]) == subs.end()) subs.push_back(owner[e]);
    }
  for (auto& subs : node_subs) std::sort(subs.begin(), subs.end());

  // Global primal interface, ordered by global dof.
  auto& topo = part.topology;
  std::vector<int> gamma_of(static_cast<std::size_t>(mesh.num_dofs()), -1);
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (node_subs[static_cast<std::size_t>(n)].size() < 2) continue;
    for (int c = 0; c < 2; ++c) {
      const int dof = 2 * n + c;
      if (mesh.dirichlet.count(dof)) continue;
      gamma_of[static_cast<std::size_t>(dof)] = topo.n_A++;
      topo.global_dof.push_back(dof);
      topo.multiplicity.push_back(static_cast<int>(node_subs[static_cast<std::size_t>(n)].size()));
    }
  }
  topo.touching.resize(static_cast<std::size_t>(topo.n_A));
  topo.a_maps.resize(static_cast<std::size_t>(n_sub));

  part.subdomains.resize(static_cast<std::size_t>(n_sub));
  for (int s = 0; s < n_sub; ++s) {
    auto& sub = part.subdomains[static_cast<std::size_t>(s)];
    sub.id = s;
    sub.elements = sub_elements[static_cast<std::size_t>(s)];
    for (int e : sub.elements)
      for (int a : mesh.elements[static_cast<std::size_t>(e)]) sub.nodes.push_back(a);
    std::sort(sub.nodes.begin(), sub.nodes.end());
    sub.nodes.erase(std::unique(sub.nodes.begin(), sub.nodes.end()), sub.nodes.end());
    std::map<int, int> local_of;
    for (std::size_t i = 0; i < sub.nodes.size(); ++i) local_of[sub.nodes[i]] = static_cast<int>(i);

    Mesh& lm = sub.local_mesh;
    lm.materials = mesh.materials;
    for (int n : sub.nodes) lm.nodes.push_back(mesh.nodes[static_cast<std::size_t>(n)]);
    for (int e : sub.elements) {
      const auto& el = mesh.elements[static_cast<std::size_t>(e)];
      lm.elements.push_back({local_of[el[0]], local_of[el[1]], local_of[el[2]]});
      lm.element_material.push_back(mesh.element_material[static_cast<std::size_t>(e)]);
    }
    for (std::size_t i = 0; i < sub.nodes.size(); ++i) {
      const int n = sub.nodes[i];
      for (int c = 0; c < 2; ++c) {
        const int g = 2 * n + c;
        const int l = 2 * static_cast<int>(i) + c;
        if (auto it = mesh.dirichlet.find(g); it != mesh.dirichlet.end())
          lm.dirichlet[l] = it->second;
        if (auto it = mesh.neumann.find(g);
            it != mesh.neumann.end() && node_subs[static_cast<std::size_t>(n)].front() == s)
          lm.neumann[l] = it->second;
      }
    }

    for (int l = 0; l < lm.num_dofs(); ++l)
      if (!lm.dirichlet.count(l)) sub.free_dofs.push_back(l);
    auto& amap = topo.a_maps[static_cast<std::size_t>(s)];
    for (int i = 0; i < sub.num_free(); ++i) {
      const int gamma = gamma_of[static_cast<std::size_t>(sub.global_dof(sub.free_dofs[static_cast<std::size_t>(i)]))];
      if (gamma >= 0) {
        topo.touching[static_cast<std::size_t>(gamma)].push_back({s, static_cast<int>(amap.size())});
        amap.push_back(gamma);
        sub.boundary_dofs.push_back(i);
      } else {
        sub.interior_dofs.push_back(i);
      }
    }
    sub.f_ext = sub.to_free(lm.external_force(1.0));
    sub.gauss_states.assign(sub.elements.size(), GaussPointState{});
  }

  topo.neighbors.resize(static_cast<std::size_t>(n_sub));
  for (int g = 0; g < topo.n_A; ++g) {
    const auto& t = topo.touching[static_cast<std::size_t>(g)];
    for (std::size_t k = 1; k < t.size(); ++k) topo.b_pairs.push_back({g, t.front(), t[k]});
    for (const auto& p : t)
      for (const auto& q : t)
        if (p.subdomain != q.subdomain)
          topo.neighbors[static_cast<std::size_t>(p.subdomain)].push_back(q.subdomain);
  }
  for (auto& nb : topo.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return part;
}

Vec jump(const InterfaceTopology& topology, std::span<const Vec> u_b) {
  Vec out(static_cast<Eigen::Index>(topology.b_pairs.size()));
  for (std::size_t k = 0; k < topology.b_pairs.size(); ++k) {
    const auto& p = topology.b_pairs[k];
    out[static_cast<Eigen::Index>(k)] = u_b[static_cast<std::size_t>(p.base.subdomain)][p.base.position] -
                                        u_b[static_cast<std::size_t>(p.other.subdomain)][p.other.position];
  }
  return out;
}

double jump_norm(const InterfaceTopology& topology, std::span<const Vec> u_b) {
  Vec j = jump(topology, u_b);
  for (std::size_t k = 0; k < topology.b_pairs.size(); ++k)
    j[static_cast<Eigen::Index>(k)] /= topology.multiplicity[static_cast<std::size_t>(topology.b_pairs[k].gamma)] - 1;
  return j.norm();
}

ScaledAssembly build_scaled(const InterfaceTopology& topology,
                            std::span<const Vec> deltas) {
  ScaledAssembly out;
  out.delta.assign(deltas.begin(), deltas.end());
  for (int g = 0; g < topology.n_A; ++g)
    if (topology.multiplicity[static_cast<std::size_t>(g)] < 2)
      throw PartitionError("build_scaled: interface dof " + std::to_string(g) +
                           " touches a single subdomain");
  for (const auto& d : deltas)
    if (d.size() > 0 && !(d.minCoeff() > 0.0))
      throw Error("build_scaled: stiffness diagonal must be positive");
  const Vec sum = topology.assemble(deltas);
  for (int s = 0; s < topology.num_subdomains(); ++s) {
    const auto& d = deltas[static_cast<std::size_t>(s)];
    const Vec total = topology.restrict_to(s, sum);
    Vec a = d.cwiseQuotient(total);
    out.d_tilde.push_back((Vec::Ones(a.size()) - a).cwiseInverse());
    out.a_tilde.push_back(std::move(a));
  }
  return out;
}

RigidBodyModes rigid_body_modes(const SubdomainSystem& sub) {
  const Mesh& lm = sub.local_mesh;
  const int nn = lm.num_nodes();
  double xc = 0.0;
  double yc = 0.0;
  for (const auto& p : lm.nodes) {
    xc += p[0] / nn;
    yc += p[1] / nn;
  }
  Mat R = Mat::Zero(lm.num_dofs(), 3);
  for (int n = 0; n < nn; ++n) {
    const auto& p = lm.nodes[static_cast<std::size_t>(n)];
    R(2 * n, 0) = 1.0;
    R(2 * n + 1, 1) = 1.0;
    R(2 * n, 2) = -(p[1] - yc);
    R(2 * n + 1, 2) = p[0] - xc;
  }

  Mat modes = R;
  if (!lm.dirichlet.empty()) {
    Mat C(static_cast<Eigen::Index>(lm.dirichlet.size()), 3);
    Eigen::Index r = 0;
    for (const auto& [dof, value] : lm.dirichlet) C.row(r++) = R.row(dof);
    Eigen::JacobiSVD<Mat> svd(C, Eigen::ComputeFullV);
    const double tol = 1e-12 * R.norm();
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv[k] > tol) ++rank;
    modes = R * svd.matrixV().rightCols(3 - rank);
  }

  Mat full(sub.num_free(), modes.cols());
  for (int i = 0; i < sub.num_free(); ++i) full.row(i) = modes.row(sub.free_dofs[static_cast<std::size_t>(i)]);
  Mat boundary(sub.num_boundary(), modes.cols());
  for (int i = 0; i < sub.num_boundary(); ++i) boundary.row(i) = full.row(sub.boundary_dofs[static_cast<std::size_t>(i)]);

  // Modified Gram-Schmidt on the boundary traces, same transform on `full`.
  RigidBodyModes out;
  out.full.resize(full.rows(), 0);
  out.boundary.resize(boundary.rows(), 0);
  for (Eigen::Index k = 0; k < boundary.cols(); ++k) {
    Vec b = boundary.col(k);
    Vec f = full.col(k);
    const double initial = b.norm();
    for (Eigen::Index q = 0; q < out.boundary.cols(); ++q) {
      const double c = out.boundary.col(q).dot(b);
      b -= c * out.boundary.col(q);
      f -= c * out.full.col(q);
    }
    const double nb = b.norm();
    if (!(nb > 1e-12 * std::max(initial, 1.0))) continue;
    out.boundary.conservativeResize(Eigen::NoChange, out.boundary.cols() + 1);
    out.full.conservativeResize(Eigen::NoChange, out.full.cols() + 1);
    out.boundary.col(out.boundary.cols() - 1) = b / nb;
    out.full.col(out.full.cols() - 1) = f / nb;
  }
  return out;
}

} // namespace mixdd
