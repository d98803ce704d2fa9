#include "mixdd/fem.hpp"

#include <cmath>
#include <string>

namespace mixdd {

Material Material::elastic(double young, double poisson) {
  Material m;
  m.kind = MaterialKind::Elastic;
  m.young = young;
  m.poisson = poisson;
  return m;
}

Material Material::elastoplastic(double young, double poisson,
                                 double yield_stress, double hardening) {
  Material m;
  m.kind = MaterialKind::ElastoplasticLinearHardening;
  m.young = young;
  m.poisson = poisson;
  m.yield_stress = yield_stress;
  m.hardening = hardening;
  return m;
}

void Material::validate() const {
  if (!(young > 0.0)) throw MeshError("material: Young modulus must be positive");
  if (!(poisson >= 0.0 && poisson < 0.5))
    throw MeshError("material: Poisson ratio must lie in [0, 0.5)");
  if (is_plastic()) {
    if (!(yield_stress > 0.0))
      throw MeshError("material: yield stress must be positive");
    if (!(hardening >= 0.0))
      throw MeshError("material: hardening must be non-negative");
  }
}

double Mesh::element_area(int e) const {
  const auto& el = elements[static_cast<std::size_t>(e)];
  const auto& p0 = nodes[static_cast<std::size_t>(el[0])];
  const auto& p1 = nodes[static_cast<std::size_t>(el[1])];
  const auto& p2 = nodes[static_cast<std::size_t>(el[2])];
  return 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) -
                (p2[0] - p0[0]) * (p1[1] - p0[1]));
}

std::array<double, 2> Mesh::element_centroid(int e) const {
  const auto& el = elements[static_cast<std::size_t>(e)];
  std::array<double, 2> c{0.0, 0.0};
  for (int a : el) {
    c[0] += nodes[static_cast<std::size_t>(a)][0] / 3.0;
    c[1] += nodes[static_cast<std::size_t>(a)][1] / 3.0;
  }
  return c;
}

void Mesh::validate(bool require_dirichlet) const {
  if (element_material.size() != elements.size())
    throw MeshError("mesh: element_material size mismatch");
  for (const auto& m : materials) m.validate();
  for (int e = 0; e < num_elements(); ++e) {
    for (int a : elements[static_cast<std::size_t>(e)]) {
      if (a < 0 || a >= num_nodes())
        throw MeshError("mesh: element " + std::to_string(e) +
                        " references invalid node " + std::to_string(a));
    }
    const int mat = element_material[static_cast<std::size_t>(e)];
    if (mat < 0 || mat >= static_cast<int>(materials.size()))
      throw MeshError("mesh: element " + std::to_string(e) +
                      " references invalid material");
    if (std::abs(element_area(e)) <= 1e-14)
      throw MeshError("mesh: degenerate element " + std::to_string(e));
  }
  for (const auto& [dof, value] : dirichlet) {
    if (dof < 0 || dof >= num_dofs())
      throw MeshError("mesh: invalid Dirichlet dof " + std::to_string(dof));
  }
  for (const auto& [dof, value] : neumann) {
    if (dof < 0 || dof >= num_dofs())
      throw MeshError("mesh: invalid Neumann dof " + std::to_string(dof));
  }
  if (require_dirichlet && dirichlet.empty())
    throw MeshError("mesh: global problem needs at least one Dirichlet dof");
}

Vec Mesh::external_force(double load_factor) const {
  Vec f = Vec::Zero(num_dofs());
  for (const auto& [dof, value] : neumann) f[dof] += load_factor * value;
  return f;
}

Vec Mesh::dirichlet_lift(double load_factor) const {
  Vec u = Vec::Zero(num_dofs());
  for (const auto& [dof, value] : dirichlet) u[dof] = load_factor * value;
  return u;
}

Eigen::Matrix3d elastic_modulus(const Material& material) {
  const double lambda = material.lame_lambda();
  const double mu = material.shear_modulus();
  Eigen::Matrix3d D;
  D << lambda + 2.0 * mu, lambda, 0.0,
       lambda, lambda + 2.0 * mu, 0.0,
       0.0, 0.0, mu;
  return D;
}

namespace {

double deviatoric_norm(const std::array<double, 4>& s) {
  return std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2] + 2.0 * s[3] * s[3]);
}

std::array<double, 4> deviator(const std::array<double, 4>& sigma) {
  const double p = (sigma[0] + sigma[1] + sigma[2]) / 3.0;
  return {sigma[0] - p, sigma[1] - p, sigma[2] - p, sigma[3]};
}

} // namespace

double yield_function(const std::array<double, 4>& stress, double alpha,
                      const Material& material) {
  const double q = std::sqrt(1.5) * deviatoric_norm(deviator(stress));
  return q - (material.yield_stress + material.hardening * alpha);
}

ReturnMapResult radial_return(const std::array<double, 3>& strain,
                              const GaussPointState& state,
                              const Material& material) {
  const double G = material.shear_modulus();
  const double lambda = material.lame_lambda();
  const auto& ep = state.plastic_strain;

  // Elastic strain (xx, yy, zz, xy), total zz strain is zero in plane strain.
  const std::array<double, 4> ee{strain[0] - ep[0], strain[1] - ep[1],
                                 -ep[2], 0.5 * strain[2] - ep[3]};
  const double tr = ee[0] + ee[1] + ee[2];
  std::array<double, 4> sigma{lambda * tr + 2.0 * G * ee[0],
                              lambda * tr + 2.0 * G * ee[1],
                              lambda * tr + 2.0 * G * ee[2], 2.0 * G * ee[3]};

  ReturnMapResult out;
  out.stress = sigma;
  out.state = state;
  out.modulus = elastic_modulus(material);
  if (!material.is_plastic()) return out;

  const auto s = deviator(sigma);
  const double snorm = deviatoric_norm(s);
  const double q = std::sqrt(1.5) * snorm;
  const double h = material.hardening;
  const double f = q - (material.yield_stress + h * state.accumulated_plastic);
  if (f <= 0.0) return out;

  const double dgamma = f / (3.0 * G + h);
  const std::array<double, 4> n{s[0] / snorm, s[1] / snorm, s[2] / snorm,
                                s[3] / snorm};
  const double shrink = 2.0 * G * std::sqrt(1.5) * dgamma;
  for (int c = 0; c < 4; ++c) {
    out.stress[static_cast<std::size_t>(c)] -= shrink * n[static_cast<std::size_t>(c)];
    out.state.plastic_strain[static_cast<std::size_t>(c)] +=
        std::sqrt(1.5) * dgamma * n[static_cast<std::size_t>(c)];
  }
  out.state.accumulated_plastic += dgamma;
  out.delta_gamma = dgamma;
  out.plastic = true;

  // D = De - 2G (3G dgamma / q) Idev + 6G^2 (dgamma / q - 1 / (3G + h)) n x n,
  // restricted to the in-plane components (xx, yy, xy).
  const double c1 = 2.0 * G * 3.0 * G * dgamma / q;
  const double c2 = 6.0 * G * G * (dgamma / q - 1.0 / (3.0 * G + h));
  Eigen::Matrix3d idev;
  idev << 2.0 / 3.0, -1.0 / 3.0, 0.0,
          -1.0 / 3.0, 2.0 / 3.0, 0.0,
          0.0, 0.0, 0.5;
  const Eigen::Vector3d nv(n[0], n[1], n[3]);
  out.modulus += -c1 * idev + c2 * nv * nv.transpose();
  return out;
}

namespace {

struct ElementKinematics {
  Eigen::Matrix<double, 3, 6> B;
  double area;
};

ElementKinematics kinematics(const Mesh& mesh, int e) {
  const auto& el = mesh.elements[static_cast<std::size_t>(e)];
  const auto& p0 = mesh.nodes[static_cast<std::size_t>(el[0])];
  const auto& p1 = mesh.nodes[static_cast<std::size_t>(el[1])];
  const auto& p2 = mesh.nodes[static_cast<std::size_t>(el[2])];
  const double two_a =
      (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
  const double scale = (p1[0] - p0[0]) * (p1[0] - p0[0]) +
                       (p1[1] - p0[1]) * (p1[1] - p0[1]);
  if (!(std::abs(two_a) > 1e-14 * scale))
    throw AssemblyError("assemble: degenerate Jacobian in element " +
                        std::to_string(e));
  const std::array<double, 3> b{p1[1] - p2[1], p2[1] - p0[1], p0[1] - p1[1]};
  const std::array<double, 3> c{p2[0] - p1[0], p0[0] - p2[0], p1[0] - p0[0]};
  ElementKinematics k;
  k.B.setZero();
  for (int a = 0; a < 3; ++a) {
    const double ba = b[static_cast<std::size_t>(a)] / two_a;
    const double ca = c[static_cast<std::size_t>(a)] / two_a;
    k.B(0, 2 * a) = ba;
    k.B(1, 2 * a + 1) = ca;
    k.B(2, 2 * a) = ca;
    k.B(2, 2 * a + 1) = ba;
  }
  k.area = 0.5 * std::abs(two_a);
  return k;
}

template <bool WithTangent>
void assemble_impl(const Mesh& mesh, std::span<const GaussPointState> states,
                   const Vec& u, AssemblyResult& out) {
  if (u.size() != mesh.num_dofs())
    throw AssemblyError("assemble: displacement size does not match dof count");
  if (static_cast<int>(states.size()) != mesh.num_elements())
    throw AssemblyError("assemble: state count does not match element count");
  out.f_int = Vec::Zero(mesh.num_dofs());
  out.trial_states.assign(states.begin(), states.end());
  std::vector<Triplet> triplets;
  if constexpr (WithTangent) triplets.reserve(36 * static_cast<std::size_t>(mesh.num_elements()));

  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    const auto kin = kinematics(mesh, e);
    std::array<int, 6> dofs{};
    Eigen::Matrix<double, 6, 1> ue;
    for (int a = 0; a < 3; ++a) {
      for (int c = 0; c < 2; ++c) {
        dofs[static_cast<std::size_t>(2 * a + c)] = 2 * el[static_cast<std::size_t>(a)] + c;
        ue[2 * a + c] = u[2 * el[static_cast<std::size_t>(a)] + c];
      }
    }
    const Eigen::Vector3d eps = kin.B * ue;
    const auto rm = radial_return({eps[0], eps[1], eps[2]},
                                  states[static_cast<std::size_t>(e)],
                                  mesh.material_of(e));
    out.trial_states[static_cast<std::size_t>(e)] = rm.state;
    const Eigen::Vector3d sig(rm.stress[0], rm.stress[1], rm.stress[3]);
    const Eigen::Matrix<double, 6, 1> fe = -kin.area * kin.B.transpose() * sig;
    for (int i = 0; i < 6; ++i) out.f_int[dofs[static_cast<std::size_t>(i)]] += fe[i];
    if constexpr (WithTangent) {
      const Eigen::Matrix<double, 6, 6> ke =
          kin.area * kin.B.transpose() * rm.modulus * kin.B;
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
          triplets.emplace_back(dofs[static_cast<std::size_t>(i)],
                                dofs[static_cast<std::size_t>(j)], ke(i, j));
    }
  }
  if constexpr (WithTangent) {
    out.K_t.resize(mesh.num_dofs(), mesh.num_dofs());
    out.K_t.setFromTriplets(triplets.begin(), triplets.end());
  }
}

} // namespace

AssemblyResult assemble(const Mesh& mesh, std::span<const GaussPointState> states,
                        const Vec& u) {
  AssemblyResult out;
  assemble_impl<true>(mesh, states, u, out);
  return out;
}

Vec internal_force(const Mesh& mesh, std::span<const GaussPointState> states,
                   const Vec& u) {
  AssemblyResult out;
  assemble_impl<false>(mesh, states, u, out);
  return out.f_int;
}

ConstrainedSystem apply_dirichlet(const SpMat& K, const Vec& rhs,
                                  const std::map<int, double>& dirichlet) {
  if (dirichlet.empty()) return {K, rhs};
  const auto n = K.rows();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  Vec imposed = Vec::Zero(n);
  for (const auto& [dof, value] : dirichlet) {
    if (dof < 0 || dof >= n) throw Error("apply_dirichlet: invalid dof");
    fixed[static_cast<std::size_t>(dof)] = 1;
    imposed[dof] = value;
  }
  ConstrainedSystem out;
  out.rhs = rhs - K * imposed;
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(K.nonZeros()));
  for (int col = 0; col < K.outerSize(); ++col) {
    for (SpMat::InnerIterator it(K, col); it; ++it) {
      if (fixed[static_cast<std::size_t>(it.row())] || fixed[static_cast<std::size_t>(it.col())]) continue;
      triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    }
  }
  for (const auto& [dof, value] : dirichlet) {
    triplets.emplace_back(dof, dof, 1.0);
    out.rhs[dof] = value;
  }
  out.K.resize(n, n);
  out.K.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

SpMat extract_block(const SpMat& K, std::span<const int> rows,
                    std::span<const int> cols) {
  std::vector<int> row_pos(static_cast<std::size_t>(K.rows()), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) row_pos[static_cast<std::size_t>(rows[i])] = static_cast<int>(i);
  std::vector<Triplet> triplets;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (SpMat::InnerIterator it(K, cols[j]); it; ++it) {
      const int r = row_pos[static_cast<std::size_t>(it.row())];
      if (r >= 0) triplets.emplace_back(r, static_cast<int>(j), it.value());
    }
  }
  SpMat out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

} // namespace mixdd
