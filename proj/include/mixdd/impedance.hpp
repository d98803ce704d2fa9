#pragma once

// Interface impedances Q = sparse - W M^-1 W^T on the boundary of one
// subdomain, and the four construction strategies.

#include "mixdd/partition.hpp"
#include "mixdd/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace mixdd {

enum class ImpedanceKind { Lumped, Superlumped, TwoScale, ExactComplement };

/// "lumped" | "superlumped" | "two-scale" | "exact-complement".
ImpedanceKind parse_impedance(const std::string& name);
std::string to_string(ImpedanceKind kind);

struct Impedance {
  SpMat sparse;
  /// Low-rank correction; empty (zero columns) for purely sparse impedances.
  Mat W;
  Mat M;

  int size() const { return static_cast<int>(sparse.rows()); }
  bool has_low_rank() const { return W.cols() > 0; }
  Vec apply(const Vec& x) const;
  Mat dense() const;
};

/// Sum of the neighbors' boundary blocks restricted to the boundary of j.
Impedance lumped_neighbor(int j, const InterfaceTopology& topology,
                          std::span<const SpMat> boundary_blocks);

/// Diagonal version: sum of the neighbors' boundary diagonals.
Impedance superlumped_neighbor(int j, const InterfaceTopology& topology,
                               std::span<const Vec> boundary_diagonals);

/// Two-scale impedance: superlumped stiffness combined with the rigid body
/// flexibility of the remainder,
///   Q^-1 = Q_sl^-1 + V F V^T,  V = D_j A_j^T G(:, cols),  F = C^-1(cols, cols),
/// returned in stiffness form Q_sl - Q_sl V (F^-1 + V^T Q_sl V)^-1 V^T Q_sl.
/// `coarse_basis` is the scaled coarse basis on Gamma_A, `column_owner` the
/// subdomain of each of its columns, `coarse_inverse` the inverse of the
/// coarse matrix G^T S_A G.
Impedance two_scale(int j, const InterfaceTopology& topology,
                    const ScaledAssembly& scaled, const Impedance& superlumped,
                    const Mat& coarse_basis, std::span<const int> column_owner,
                    const Mat& coarse_inverse);

/// Exact complement Dirichlet-to-Neumann operator, linearized: the reaction
/// of the rest of the structure on the boundary of j is Q du_b + constant,
/// du_b measured from the state where tangents and residuals were taken.
struct AffineImpedance {
  Impedance Q;
  Vec constant;
};

/// Built from every other subdomain's tangent on its free dofs and its
/// residual f_int + f_ext. Sequential, needs the whole structure.
AffineImpedance exact_complement(int j, const Partition& partition,
                                 std::span<const SpMat> tangents,
                                 std::span<const Vec> residuals);

} // namespace mixdd
