#pragma once

#include "mixdd/fem.hpp"

#include <random>

namespace mixdd::testing {

/// Structured nx x ny rectangle split into counter-clockwise triangles.
inline Mesh rect_mesh(double length, double height, int nx, int ny,
                      const Material& material) {
  Mesh m;
  m.materials.push_back(material);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      m.nodes.push_back({length * i / nx, height * j / ny});
  auto id = [nx](int i, int j) { return i + (nx + 1) * j; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      m.elements.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.elements.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  m.element_material.assign(m.elements.size(), 0);
  return m;
}

/// Clamps x = 0 and imposes (0, uy) on x = length.
inline void clamp_and_pull(Mesh& m, double length, double uy) {
  for (int n = 0; n < m.num_nodes(); ++n) {
    const double x = m.nodes[static_cast<std::size_t>(n)][0];
    if (x < 1e-12) {
      m.dirichlet[2 * n] = 0.0;
      m.dirichlet[2 * n + 1] = 0.0;
    } else if (x > length - 1e-12) {
      m.dirichlet[2 * n] = 0.0;
      m.dirichlet[2 * n + 1] = uy;
    }
  }
}

inline Vec random_vec(Eigen::Index n, std::mt19937& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

inline Mat random_spd(Eigen::Index n, std::mt19937& rng) {
  Mat a(n, n);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = dist(rng);
  return a * a.transpose() + static_cast<double>(n) * Mat::Identity(n, n);
}

} // namespace mixdd::testing
