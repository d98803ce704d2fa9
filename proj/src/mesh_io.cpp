#include "mixdd/mesh_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace mixdd {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text << '\n';
}

Material material_from_json(const json& j) {
  const std::string kind = j.value("kind", std::string("elastic"));
  const double young = j.at("young").get<double>();
  const double poisson = j.at("poisson").get<double>();
  if (kind == "elastic") return Material::elastic(young, poisson);
  if (kind == "elastoplastic")
    return Material::elastoplastic(young, poisson, j.at("yield_stress").get<double>(),
                                   j.value("hardening", 0.0));
  throw MeshError("mesh: unknown material kind '" + kind + "'");
}

json material_to_json(const Material& m) {
  json j{{"kind", m.is_plastic() ? "elastoplastic" : "elastic"},
         {"young", m.young},
         {"poisson", m.poisson}};
  if (m.is_plastic()) {
    j["yield_stress"] = m.yield_stress;
    j["hardening"] = m.hardening;
  }
  return j;
}

} // namespace

Mesh parse_mesh(const std::string& text, const std::optional<Material>& fallback) {
  Mesh mesh;
  try {
    const json j = json::parse(text);
    for (const auto& p : j.at("nodes")) mesh.nodes.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    for (const auto& e : j.at("elements"))
      mesh.elements.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<int>()});
    if (j.contains("dirichlet"))
      for (const auto& d : j.at("dirichlet")) mesh.dirichlet[d.at(0).get<int>()] = d.at(1).get<double>();
    if (j.contains("neumann"))
      for (const auto& d : j.at("neumann")) mesh.neumann[d.at(0).get<int>()] += d.at(1).get<double>();
    if (j.contains("materials")) {
      for (const auto& m : j.at("materials")) mesh.materials.push_back(material_from_json(m));
      if (j.contains("element_material"))
        mesh.element_material = j.at("element_material").get<std::vector<int>>();
      else
        mesh.element_material.assign(mesh.elements.size(), 0);
    } else {
      if (!fallback) throw MeshError("mesh: no materials in file and no fallback material");
      mesh.materials.push_back(*fallback);
      mesh.element_material.assign(mesh.elements.size(), 0);
    }
  } catch (const json::exception& e) {
    throw MeshError(std::string("mesh: malformed JSON: ") + e.what());
  }
  mesh.validate(false);
  return mesh;
}

std::string format_mesh(const Mesh& mesh) {
  json j;
  j["nodes"] = json::array();
  for (const auto& p : mesh.nodes) j["nodes"].push_back({p[0], p[1]});
  j["elements"] = json::array();
  for (const auto& e : mesh.elements) j["elements"].push_back({e[0], e[1], e[2]});
  j["dirichlet"] = json::array();
  for (const auto& [dof, v] : mesh.dirichlet) j["dirichlet"].push_back({dof, v});
  j["neumann"] = json::array();
  for (const auto& [dof, v] : mesh.neumann) j["neumann"].push_back({dof, v});
  j["materials"] = json::array();
  for (const auto& m : mesh.materials) j["materials"].push_back(material_to_json(m));
  j["element_material"] = mesh.element_material;
  return j.dump();
}

Mesh read_mesh(const std::filesystem::path& path, const std::optional<Material>& fallback) {
  return parse_mesh(read_text(path), fallback);
}

void write_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  write_text(path, format_mesh(mesh));
}

std::vector<int> read_partition(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path)).get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw PartitionError(std::string("partition file: ") + e.what());
  }
}

void write_partition(const std::filesystem::path& path, const std::vector<int>& owner) {
  write_text(path, json(owner).dump());
}

} // namespace mixdd
