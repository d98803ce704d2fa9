#pragma once

// JSON mesh and partition files.
//
// Mesh file keys: nodes [[x, y]], elements [[i, j, k]], dirichlet [[dof, value]],
// neumann [[dof, value]]. Optional: materials [{kind, young, poisson,
// yield_stress, hardening}] and element_material [id]; without them every
// element uses the fallback material.

#include "mixdd/fem.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mixdd {

Mesh parse_mesh(const std::string& text, const std::optional<Material>& fallback = std::nullopt);
std::string format_mesh(const Mesh& mesh);

Mesh read_mesh(const std::filesystem::path& path,
               const std::optional<Material>& fallback = std::nullopt);
void write_mesh(const std::filesystem::path& path, const Mesh& mesh);

/// Partition file: JSON array, element index -> subdomain id.
std::vector<int> read_partition(const std::filesystem::path& path);
void write_partition(const std::filesystem::path& path, const std::vector<int>& owner);

} // namespace mixdd
