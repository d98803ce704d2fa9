#pragma once

// 2D small-strain finite elements: 3-node triangles, one Gauss point,
// plane strain, J2 plasticity with linear isotropic hardening.

#include "mixdd/types.hpp"

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mixdd {

enum class MaterialKind { Elastic, ElastoplasticLinearHardening };

struct Material {
  MaterialKind kind = MaterialKind::Elastic;
  double young = 1.0;
  double poisson = 0.3;
  double yield_stress = 0.0;
  double hardening = 0.0;

  static Material elastic(double young, double poisson);
  static Material elastoplastic(double young, double poisson,
                                double yield_stress, double hardening);

  double shear_modulus() const { return young / (2.0 * (1.0 + poisson)); }
  double lame_lambda() const {
    return young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  }
  bool is_plastic() const {
    return kind == MaterialKind::ElastoplasticLinearHardening;
  }

  /// Throws MeshError if E <= 0, nu outside [0, 0.5), or plastic data invalid.
  void validate() const;
};

struct Mesh {
  std::vector<std::array<double, 2>> nodes;
  std::vector<std::array<int, 3>> elements;
  /// Material index per element (into `materials`).
  std::vector<int> element_material;
  std::vector<Material> materials;
  /// dof index (2 * node + component) -> imposed value.
  std::map<int, double> dirichlet;
  /// dof index -> nodal force.
  std::map<int, double> neumann;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_dofs() const { return 2 * num_nodes(); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  const Material& material_of(int e) const {
    return materials[static_cast<std::size_t>(element_material[static_cast<std::size_t>(e)])];
  }

  /// Signed area of element e (positive for counter-clockwise ordering).
  double element_area(int e) const;
  std::array<double, 2> element_centroid(int e) const;

  /// Checks index ranges, element areas and materials. When
  /// `require_dirichlet` is set the mesh must carry at least one imposed dof.
  void validate(bool require_dirichlet = true) const;

  /// External force vector scaled by `load_factor` (Neumann part only).
  Vec external_force(double load_factor = 1.0) const;
  /// Vector holding the imposed values (times `load_factor`) at Dirichlet
  /// dofs and zero elsewhere.
  Vec dirichlet_lift(double load_factor = 1.0) const;
};

/// Plastic state at one Gauss point. Strain components are ordered
/// (xx, yy, zz, xy) with tensorial shear.
struct GaussPointState {
  std::array<double, 4> plastic_strain{};
  double accumulated_plastic = 0.0;
};

struct ReturnMapResult {
  /// Stress (xx, yy, zz, xy).
  std::array<double, 4> stress{};
  GaussPointState state;
  /// In-plane consistent modulus acting on (exx, eyy, gamma_xy).
  Eigen::Matrix3d modulus;
  double delta_gamma = 0.0;
  bool plastic = false;
};

/// Elastic isotropic plane-strain modulus on (exx, eyy, gamma_xy).
Eigen::Matrix3d elastic_modulus(const Material& material);

/// Von Mises yield function sqrt(3/2)|s| - (sigma0 + h * alpha).
double yield_function(const std::array<double, 4>& stress, double alpha,
                      const Material& material);

/// Closed-form radial return for plane strain J2 with linear isotropic
/// hardening. `strain` is (exx, eyy, gamma_xy). Elastic materials return the
/// elastic response.
ReturnMapResult radial_return(const std::array<double, 3>& strain,
                              const GaussPointState& state,
                              const Material& material);

struct AssemblyResult {
  /// Internal force with f_int(u) = -K u in the linear case.
  Vec f_int;
  /// Consistent tangent K_t = -d f_int / d u (symmetric).
  SpMat K_t;
  std::vector<GaussPointState> trial_states;
};

/// Internal force and consistent tangent of the whole mesh at the full nodal
/// displacement vector `u` (Dirichlet values included). `states` holds the
/// committed Gauss point state of every element.
AssemblyResult assemble(const Mesh& mesh, std::span<const GaussPointState> states,
                        const Vec& u);

/// Internal force only (no tangent), used by finite-difference checks.
Vec internal_force(const Mesh& mesh, std::span<const GaussPointState> states,
                   const Vec& u);

struct ConstrainedSystem {
  SpMat K;
  Vec rhs;
};

/// Symmetric row/column elimination of Dirichlet dofs: constrained rows and
/// columns are zeroed with a unit diagonal, the right-hand side is lifted and
/// carries the imposed value at constrained rows.
ConstrainedSystem apply_dirichlet(const SpMat& K, const Vec& rhs,
                                  const std::map<int, double>& dirichlet);

/// Submatrix K(rows, cols), in the given orders.
SpMat extract_block(const SpMat& K, std::span<const int> rows,
                    std::span<const int> cols);

} // namespace mixdd
