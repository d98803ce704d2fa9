#include "mixdd/cases.hpp"

#include "mixdd/mesh_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace mixdd {

using nlohmann::json;

namespace {

constexpr double kBimatLength = 13.0;
constexpr double kBimatHeight = 2.0;
constexpr double kArmature = 0.25;
constexpr double kBimatMax = 7.1;

constexpr double kPerfLength = 10.0;
constexpr double kPerfHeight = 1.0;
constexpr double kHoleRadius = 2.0 / 30.0;
constexpr double kHolePitch = 1.0 / 3.0;
constexpr double kPerfMax = 0.275;

// Criss-cross mesh: every cell is split into four triangles around a centre
// node. This pattern does not lock under incompressible plastic flow, which
// the single-diagonal patterns do with linear triangles in plane strain.
Mesh structured(double length, double height, int nx, int ny) {
  Mesh m;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) m.nodes.push_back({length * i / nx, height * j / ny});
  auto id = [nx](int i, int j) { return i + (nx + 1) * j; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int c = m.num_nodes();
      m.nodes.push_back({length * (i + 0.5) / nx, height * (j + 0.5) / ny});
      m.elements.push_back({id(i, j), id(i + 1, j), c});
      m.elements.push_back({id(i + 1, j), id(i + 1, j + 1), c});
      m.elements.push_back({id(i + 1, j + 1), id(i, j + 1), c});
      m.elements.push_back({id(i, j + 1), id(i, j), c});
    }
  return m;
}

void check_resolution(int nx, int ny) {
  if (nx < 4 || ny < 4) throw ConfigError("resolution too coarse: at least 4 elements per direction");
}

} // namespace

void clamp_and_bend(Mesh& mesh, double length) {
  const double tol = 1e-9 * length;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    const double x = mesh.nodes[static_cast<std::size_t>(n)][0];
    if (x < tol) {
      mesh.dirichlet[2 * n] = 0.0;
      mesh.dirichlet[2 * n + 1] = 0.0;
    } else if (x > length - tol) {
      mesh.dirichlet[2 * n] = 0.0;
      mesh.dirichlet[2 * n + 1] = 1.0;
    }
  }
}

Mesh bimaterial_mesh(int nx, int ny) {
  check_resolution(nx, ny);
  const double h = kBimatHeight / ny;
  if (kArmature / h < 1.0 - 1e-9)
    throw ConfigError("resolution too coarse: an armature needs at least one element layer (ny >= 8)");
  Mesh m = structured(kBimatLength, kBimatHeight, nx, ny);
  m.materials = {Material::elastic(420e2, 0.3), Material::elastoplastic(210e6, 0.3, 420e3, 1e3)};
  m.element_material.resize(m.elements.size());
  for (int e = 0; e < m.num_elements(); ++e) {
    const double y = m.element_centroid(e)[1];
    m.element_material[static_cast<std::size_t>(e)] =
        (y < kArmature || y > kBimatHeight - kArmature) ? 1 : 0;
  }
  clamp_and_bend(m, kBimatLength);
  return m;
}

Mesh multiperf_mesh(int nx, int ny) {
  check_resolution(nx, ny);
  Mesh full = structured(kPerfLength, kPerfHeight, nx, ny);
  const int cols = static_cast<int>(std::lround(kPerfLength / kHolePitch));
  const int rows = static_cast<int>(std::lround(kPerfHeight / kHolePitch));
  std::vector<int> removed(static_cast<std::size_t>(cols * rows), 0);
  Mesh m;
  m.nodes = full.nodes;
  for (int e = 0; e < full.num_elements(); ++e) {
    const auto c = full.element_centroid(e);
    const int ci = std::min(cols - 1, static_cast<int>(c[0] / kHolePitch));
    const int cj = std::min(rows - 1, static_cast<int>(c[1] / kHolePitch));
    const double dx = c[0] - (ci + 0.5) * kHolePitch;
    const double dy = c[1] - (cj + 0.5) * kHolePitch;
    if (dx * dx + dy * dy < kHoleRadius * kHoleRadius) {
      ++removed[static_cast<std::size_t>(ci + cols * cj)];
      continue;
    }
    m.elements.push_back(full.elements[static_cast<std::size_t>(e)]);
  }
  for (int r : removed)
    if (r == 0) throw ConfigError("resolution too coarse: a hole removes no element");
  m.materials = {Material::elastoplastic(210e6, 0.3, 420e3, 1e6)};
  m.element_material.assign(m.elements.size(), 0);
  m = compact(m);
  clamp_and_bend(m, kPerfLength);
  return m;
}

Mesh compact(const Mesh& mesh) {
  std::vector<int> map(static_cast<std::size_t>(mesh.num_nodes()), -1);
  for (const auto& el : mesh.elements)
    for (int n : el) map[static_cast<std::size_t>(n)] = 0;
  Mesh out;
  out.materials = mesh.materials;
  out.element_material = mesh.element_material;
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (map[static_cast<std::size_t>(n)] < 0) continue;
    map[static_cast<std::size_t>(n)] = out.num_nodes();
    out.nodes.push_back(mesh.nodes[static_cast<std::size_t>(n)]);
  }
  for (const auto& el : mesh.elements)
    out.elements.push_back({map[static_cast<std::size_t>(el[0])], map[static_cast<std::size_t>(el[1])],
                            map[static_cast<std::size_t>(el[2])]});
  auto remap = [&](const std::map<int, double>& in, std::map<int, double>& to) {
    for (const auto& [dof, value] : in) {
      const int n = map[static_cast<std::size_t>(dof / 2)];
      if (n >= 0) to[2 * n + dof % 2] = value;
    }
  };
  remap(mesh.dirichlet, out.dirichlet);
  remap(mesh.neumann, out.neumann);
  return out;
}

void jitter_nodes(Mesh& mesh, double fraction, double h, unsigned seed) {
  if (fraction <= 0.0) return;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& p : mesh.nodes) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  const double tol = 1e-9 * std::max(xmax - xmin, ymax - ymin);
  // Nodes on hole boundaries move too; only the outer box stays fixed.
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> d(-fraction * h, fraction * h);
  for (auto& p : mesh.nodes) {
    const double dx = d(rng), dy = d(rng);
    if (p[0] > xmin + tol && p[0] < xmax - tol) p[0] += dx;
    if (p[1] > ymin + tol && p[1] < ymax - tol) p[1] += dy;
  }
  for (int e = 0; e < mesh.num_elements(); ++e)
    if (!(mesh.element_area(e) > 0.0)) throw ConfigError("jitter too large: inverted element");
}

PartitionStrategy default_strategy(const std::string& kind) {
  if (kind == "bimaterial") return SlabStrategy{13};
  if (kind == "multiperf") return GridStrategy{10, 3};
  throw ConfigError("no default partition for case kind '" + kind + "'");
}

LoadProgram default_program(const std::string& kind) {
  LoadProgram p;
  if (kind == "bimaterial") {
    for (double f : {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.375, 0.4, 0.425, 0.45})
      p.factors.push_back(f * kBimatMax);
  } else if (kind == "multiperf") {
    for (double f : {0.4, 0.6, 0.8, 1.0, 1.15, 1.3, 1.45, 1.5}) p.factors.push_back(f * kPerfMax);
  } else {
    p.factors = {1.0};
  }
  return p;
}

GeneratedCase generate_case(const CaseSpec& spec) {
  GeneratedCase out;
  out.kind = spec.kind;
  double h = 0.0;
  if (spec.kind == "bimaterial") {
    const int nx = spec.nx > 0 ? spec.nx : 104;
    const int ny = spec.ny > 0 ? spec.ny : 16;
    out.mesh = bimaterial_mesh(nx, ny);
    h = std::min(kBimatLength / nx, kBimatHeight / ny);
  } else if (spec.kind == "multiperf") {
    const int nx = spec.nx > 0 ? spec.nx : 120;
    const int ny = spec.ny > 0 ? spec.ny : 12;
    out.mesh = multiperf_mesh(nx, ny);
    h = std::min(kPerfLength / nx, kPerfHeight / ny);
  } else if (spec.kind == "custom") {
    if (spec.mesh_path.empty()) throw ConfigError("custom case needs a mesh path");
    out.mesh = read_mesh(spec.mesh_path);
    if (!spec.partition_path.empty()) out.element_owner = read_partition(spec.partition_path);
    out.program = default_program(spec.kind);
  } else {
    throw ConfigError("unknown case kind '" + spec.kind + "' (expected bimaterial, multiperf or custom)");
  }
  if (spec.kind != "custom") {
    jitter_nodes(out.mesh, spec.jitter, h, spec.seed);
    out.program = default_program(spec.kind);
  }
  if (spec.elastic)
    for (auto& mat : out.mesh.materials) mat = Material::elastic(mat.young, mat.poisson);
  out.mesh.validate();
  if (spec.kind != "custom") out.element_owner = case_owners(out, default_strategy(spec.kind));
  return out;
}

std::vector<int> case_owners(const GeneratedCase& generated, const PartitionStrategy& strategy) {
  if (generated.kind == "custom" || std::holds_alternative<ExplicitStrategy>(strategy))
    return element_owners(generated.mesh, strategy);
  // The third node of every criss-cross triangle is its cell centre: binning
  // that node instead of the centroid never splits a cell.
  Mesh centres;
  centres.nodes = generated.mesh.nodes;
  for (const auto& el : generated.mesh.elements) centres.elements.push_back({el[2], el[2], el[2]});
  return element_owners(centres, strategy);
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

std::vector<ImpedanceKind> impedance_list(const json& j) {
  std::vector<ImpedanceKind> out;
  for (const auto& s : j) out.push_back(parse_impedance(s.get<std::string>()));
  return out;
}

PartitionStrategy strategy_from(const json& j) {
  reject_unknown(j, {"type", "n", "nx", "ny", "path"}, "partition");
  const std::string type = j.at("type").get<std::string>();
  if (type == "slab") return SlabStrategy{j.at("n").get<int>()};
  if (type == "grid") return GridStrategy{j.at("nx").get<int>(), j.at("ny").get<int>()};
  if (type == "file") return ExplicitStrategy{read_partition(j.at("path").get<std::string>())};
  throw ConfigError("partition: unknown type '" + type + "' (expected slab, grid or file)");
}

} // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, {"case", "partition", "load", "solver", "bench", "linbench", "threads"}, "config");
    if (j.contains("case")) {
      const auto& k = j["case"];
      reject_unknown(k, {"kind", "nx", "ny", "jitter", "seed", "mesh", "partition", "elastic"}, "case");
      c.case_spec.kind = k.value("kind", c.case_spec.kind);
      c.case_spec.nx = k.value("nx", 0);
      c.case_spec.ny = k.value("ny", 0);
      c.case_spec.jitter = k.value("jitter", 0.0);
      c.case_spec.seed = k.value("seed", 0u);
      c.case_spec.elastic = k.value("elastic", false);
      if (k.contains("mesh")) c.case_spec.mesh_path = k["mesh"].get<std::string>();
      if (k.contains("partition")) c.case_spec.partition_path = k["partition"].get<std::string>();
    }
    if (j.contains("partition")) c.partition = strategy_from(j["partition"]);
    if (j.contains("load")) {
      const auto& l = j["load"];
      reject_unknown(l, {"factors", "scale"}, "load");
      LoadProgram p;
      const double scale = l.value("scale", 1.0);
      for (const auto& f : l.at("factors")) p.factors.push_back(scale * f.get<double>());
      p.validate();
      c.program = p;
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      reject_unknown(s, {"impedance", "tangent_solver", "srks", "srks_theta", "srks_capacity", "linear_predictor",
                         "thresholds"},
                     "solver");
      if (s.contains("impedance")) c.solver.impedance = parse_impedance(s["impedance"].get<std::string>());
      if (s.contains("tangent_solver"))
        c.solver.tangent_solver = parse_tangent_solver(s["tangent_solver"].get<std::string>());
      c.solver.srks = s.value("srks", false);
      c.solver.srks_theta = s.value("srks_theta", c.solver.srks_theta);
      c.solver.srks_capacity = s.value("srks_capacity", c.solver.srks_capacity);
      c.solver.linear_predictor = s.value("linear_predictor", c.solver.linear_predictor);
      if (s.contains("thresholds")) {
        const auto& t = s["thresholds"];
        reject_unknown(t, {"global", "local_first", "local", "krylov", "max_global", "max_local", "line_search"},
                       "thresholds");
        auto& th = c.solver.thresholds;
        th.global = t.value("global", th.global);
        th.local_first = t.value("local_first", th.local_first);
        th.local = t.value("local", th.local);
        th.krylov = t.value("krylov", th.krylov);
        th.max_global = t.value("max_global", th.max_global);
        th.max_local = t.value("max_local", th.max_local);
        th.line_search = t.value("line_search", th.line_search);
      }
      c.solver.thresholds.validate();
    }
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      reject_unknown(b, {"impedances", "nks"}, "bench");
      if (b.contains("impedances")) c.bench_impedances = impedance_list(b["impedances"]);
      c.bench_nks = b.value("nks", true);
    }
    if (j.contains("linbench")) {
      const auto& b = j["linbench"];
      reject_unknown(b, {"subdomains", "impedances", "displacement"}, "linbench");
      if (b.contains("subdomains")) c.linbench_subdomains = b["subdomains"].get<std::vector<int>>();
      if (b.contains("impedances")) c.linbench_impedances = impedance_list(b["impedances"]);
      c.linbench_displacement = b.value("displacement", c.linbench_displacement);
    }
    c.threads = j.value("threads", 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

} // namespace mixdd
