#pragma once

// Benchmark cases (bi-material and multiperforated bending beams) and the
// JSON run configuration.

#include "mixdd/driver.hpp"
#include "mixdd/fem.hpp"
#include "mixdd/partition.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mixdd {

struct CaseSpec {
  /// "bimaterial", "multiperf" or "custom".
  std::string kind = "bimaterial";
  /// Elements along the length and through the height; 0 selects the default.
  int nx = 0;
  int ny = 0;
  /// Random perturbation of interior nodes, as a fraction of the element size.
  double jitter = 0.0;
  unsigned seed = 0;
  /// Custom case files.
  std::filesystem::path mesh_path;
  std::filesystem::path partition_path;
  /// Replace every material by its elastic part.
  bool elastic = false;
};

struct GeneratedCase {
  std::string kind;
  Mesh mesh;
  /// Element -> subdomain of the default partition (empty for custom cases
  /// without a partition file).
  std::vector<int> element_owner;
  /// Load factors of the case, already multiplied by the maximal displacement.
  LoadProgram program;
};

/// Structured beam meshes. Throws ConfigError when the resolution cannot
/// represent the armatures or the holes.
Mesh bimaterial_mesh(int nx, int ny);
Mesh multiperf_mesh(int nx, int ny);

/// Clamps x = 0 and imposes (0, 1) at x = length (unit load pattern).
void clamp_and_bend(Mesh& mesh, double length);

/// Removes nodes no element references and renumbers the rest.
Mesh compact(const Mesh& mesh);

/// Moves nodes strictly inside the bounding box by up to `fraction` times
/// `h` in each direction, deterministically from `seed`.
void jitter_nodes(Mesh& mesh, double fraction, double h, unsigned seed);

GeneratedCase generate_case(const CaseSpec& spec);

/// Element owners of a partition strategy for a case. On generated meshes
/// slabs and grids keep every cell whole (cuts follow cell lines); custom
/// meshes are cut by element centroid.
std::vector<int> case_owners(const GeneratedCase& generated, const PartitionStrategy& strategy);

/// Default partition strategy and load program of a case kind.
PartitionStrategy default_strategy(const std::string& kind);
LoadProgram default_program(const std::string& kind);

/// Everything a run needs, read from a JSON configuration file.
struct RunConfig {
  CaseSpec case_spec;
  std::optional<PartitionStrategy> partition;
  std::optional<LoadProgram> program;
  SolverOptions solver;
  /// Strategies compared by bench; NKS is appended when `bench_nks` is set.
  std::vector<ImpedanceKind> bench_impedances{ImpedanceKind::Lumped, ImpedanceKind::Superlumped,
                                              ImpedanceKind::TwoScale};
  bool bench_nks = true;
  /// linbench: subdomain counts, impedances and imposed displacement.
  std::vector<int> linbench_subdomains{2, 3, 5, 8, 13};
  std::vector<ImpedanceKind> linbench_impedances{ImpedanceKind::ExactComplement,
                                                 ImpedanceKind::Lumped, ImpedanceKind::TwoScale};
  double linbench_displacement = 1.5e-3;
  int threads = 0;
};

/// Parses a JSON configuration. Unknown keys raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig read_config(const std::filesystem::path& path);

} // namespace mixdd
