#pragma once

// Substructuring: subdomain meshes, the primal interface and the assembly,
// jump and scaling operators defined on it.

#include "mixdd/fem.hpp"
#include "mixdd/types.hpp"

#include <span>
#include <variant>
#include <vector>

namespace mixdd {

/// One subdomain with its local numbering. Unknowns of a subdomain are the
/// free (non-Dirichlet) local dofs; `boundary_dofs` and `interior_dofs` are
/// positions inside that free vector and realize the trace operator t(s).
struct SubdomainSystem {
  int id = 0;
  /// Global element ids, in local element order.
  std::vector<int> elements;
  /// Global node ids, local node i is nodes[i].
  std::vector<int> nodes;
  /// Local mesh; its Dirichlet/Neumann data are those of the unit load.
  Mesh local_mesh;
  /// Local dof ids (2 * local node + component) of the unknowns.
  std::vector<int> free_dofs;
  /// Interface positions in the free vector, ordered like the a_map.
  std::vector<int> boundary_dofs;
  std::vector<int> interior_dofs;
  /// Neumann load on the free dofs for a unit load factor.
  Vec f_ext;
  /// Committed Gauss point states, one per local element.
  std::vector<GaussPointState> gauss_states;

  int num_free() const { return static_cast<int>(free_dofs.size()); }
  int num_boundary() const { return static_cast<int>(boundary_dofs.size()); }
  int global_dof(int local_dof) const {
    return 2 * nodes[static_cast<std::size_t>(local_dof / 2)] + local_dof % 2;
  }

  /// Full local nodal vector: free values scattered, Dirichlet values lifted.
  Vec full_displacement(const Vec& u_free, double load_factor) const;
  Vec to_free(const Vec& full) const;
  Vec trace(const Vec& u_free) const;
  /// t^T x_b : boundary vector extended by zero to the free vector.
  Vec extend(const Vec& x_b) const;
};

/// Global primal interface and its assembly maps.
struct InterfaceTopology {
  struct Touch {
    int subdomain;
    int position; // index in the subdomain boundary vector
  };
  struct SignedPair {
    int gamma;
    Touch base;  // lowest-numbered touching subdomain
    Touch other;
  };

  int n_A = 0;
  /// Per subdomain: boundary position -> Gamma_A index (realizes A(s)).
  std::vector<std::vector<int>> a_maps;
  /// Per Gamma_A dof: number of subdomains touching it.
  std::vector<int> multiplicity;
  /// Per Gamma_A dof: global mesh dof.
  std::vector<int> global_dof;
  /// Per Gamma_A dof: touching subdomains sorted by id.
  std::vector<std::vector<Touch>> touching;
  std::vector<SignedPair> b_pairs;
  /// Per subdomain: sorted list of subdomains sharing at least one dof.
  std::vector<std::vector<int>> neighbors;

  int num_subdomains() const { return static_cast<int>(a_maps.size()); }
  /// sum_s A(s) x(s).
  Vec assemble(std::span<const Vec> local) const;
  /// A(s)^T x.
  Vec restrict_to(int s, const Vec& x) const;
  std::vector<Vec> restrict_all(const Vec& x) const;
};

struct SlabStrategy {
  int n = 1;
};
struct GridStrategy {
  int nx = 1;
  int ny = 1;
};
/// Element index -> subdomain id.
struct ExplicitStrategy {
  std::vector<int> owner;
};
using PartitionStrategy = std::variant<SlabStrategy, GridStrategy, ExplicitStrategy>;

struct Partition {
  std::vector<SubdomainSystem> subdomains;
  InterfaceTopology topology;
  std::vector<int> element_owner;

  int num_subdomains() const { return static_cast<int>(subdomains.size()); }
};

/// Element -> subdomain map of a strategy (slabs/grid cut the bounding box by
/// element centroid).
std::vector<int> element_owners(const Mesh& mesh, const PartitionStrategy& strategy);

/// Builds subdomains and the interface. Throws PartitionError for an empty
/// subdomain or a subdomain whose complement is not edge-connected.
Partition partition_mesh(const Mesh& mesh, const PartitionStrategy& strategy);

/// Signed jump B u_b: one entry per (base, other) pair, base minus other.
Vec jump(const InterfaceTopology& topology, std::span<const Vec> u_b);

/// Euclidean norm of the jump with each entry divided by (multiplicity - 1).
double jump_norm(const InterfaceTopology& topology, std::span<const Vec> u_b);

/// Stiffness-scaled assembly: a_tilde(s)_x = Delta(s)_x / sum_q Delta(q)_x and
/// d_tilde(s)_x = 1 / (1 - a_tilde(s)_x).
struct ScaledAssembly {
  std::vector<Vec> delta;
  std::vector<Vec> a_tilde;
  std::vector<Vec> d_tilde;
};

ScaledAssembly build_scaled(const InterfaceTopology& topology,
                            std::span<const Vec> deltas);

/// Rigid body motions of a subdomain compatible with its Dirichlet dofs.
/// `boundary` holds orthonormal columns; `full` is the same combination
/// evaluated on all free dofs.
struct RigidBodyModes {
  Mat full;
  Mat boundary;

  int count() const { return static_cast<int>(boundary.cols()); }
};

RigidBodyModes rigid_body_modes(const SubdomainSystem& subdomain);

} // namespace mixdd
