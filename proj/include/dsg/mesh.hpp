#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"
#include "dsg/geometry.hpp"

namespace dsg {

// Indexed triangle mesh in its local frame (meters). UVs, when present, are
// per vertex; OBJ faces that reuse a position with different texture
// coordinates are split during loading. Keypoints are named 3D points on the
// surface, loaded from a `<stem>.keypoints.json` sidecar next to the OBJ.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<Vec2> uvs;  // empty, or one entry per vertex
  std::map<std::string, Vec3> keypoints3d;

  bool has_uvs() const { return !uvs.empty(); }

  void validate() const {
    if (triangles.empty()) fail(Errc::empty_mesh, "mesh has no triangles");
    for (const auto& t : triangles)
      for (uint32_t idx : t)
        if (idx >= vertices.size()) fail(Errc::parse_error, "triangle index out of range");
    if (!uvs.empty() && uvs.size() != vertices.size())
      fail(Errc::parse_error, "uv count does not match vertex count");
  }
};

inline Aabb mesh_aabb(const Mesh& mesh, const RigidTransform& pose) {
  if (mesh.vertices.empty() || mesh.triangles.empty())
    fail(Errc::empty_mesh, "mesh_aabb: empty mesh");
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.extend(pose * v);
  return box;
}

namespace detail {

inline int parse_obj_index(const std::string& token, size_t count, int line_no,
                           std::optional<int>* uv_index) {
  // Forms: v, v/vt, v//vn, v/vt/vn. Negative indices are relative to the end.
  std::string vpart = token, tpart;
  if (auto slash = token.find('/'); slash != std::string::npos) {
    vpart = token.substr(0, slash);
    std::string rest = token.substr(slash + 1);
    if (auto slash2 = rest.find('/'); slash2 != std::string::npos) rest = rest.substr(0, slash2);
    tpart = rest;
  }
  long v = 0;
  try {
    v = std::stol(vpart);
  } catch (const std::exception&) {
    fail(Errc::parse_error, "line " + std::to_string(line_no) + ": bad face index '" + token + "'");
  }
  long idx = v > 0 ? v - 1 : static_cast<long>(count) + v;
  if (idx < 0 || idx >= static_cast<long>(count))
    fail(Errc::parse_error, "line " + std::to_string(line_no) + ": face index out of range");
  if (uv_index) {
    *uv_index = std::nullopt;
    if (!tpart.empty()) {
      try {
        *uv_index = static_cast<int>(std::stol(tpart));
      } catch (const std::exception&) {
        fail(Errc::parse_error, "line " + std::to_string(line_no) + ": bad uv index");
      }
    }
  }
  return static_cast<int>(idx);
}

}  // namespace detail

// Loads a Wavefront OBJ (v, vt, f records; everything else ignored).
// Polygons are fan-triangulated from the first vertex. A missing keypoint
// sidecar is not an error; background assets have none.
inline Mesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open mesh file " + path.string());

  std::vector<Vec3> positions;
  std::vector<Vec2> texcoords;
  struct Corner {
    int v;
    int vt;  // -1 when absent
  };
  std::vector<std::array<Corner, 3>> faces;
  bool any_uv = false;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag.empty() || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x >> p.y >> p.z))
        fail(Errc::parse_error, "line " + std::to_string(line_no) + ": bad vertex");
      positions.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ls >> t.x >> t.y))
        fail(Errc::parse_error, "line " + std::to_string(line_no) + ": bad texcoord");
      texcoords.push_back(t);
    } else if (tag == "f") {
      std::vector<Corner> poly;
      std::string token;
      while (ls >> token) {
        std::optional<int> uv;
        int v = detail::parse_obj_index(token, positions.size(), line_no, &uv);
        int vt = -1;
        if (uv) {
          long t = *uv > 0 ? *uv - 1 : static_cast<long>(texcoords.size()) + *uv;
          if (t < 0 || t >= static_cast<long>(texcoords.size()))
            fail(Errc::parse_error, "line " + std::to_string(line_no) + ": uv index out of range");
          vt = static_cast<int>(t);
          any_uv = true;
        }
        poly.push_back({v, vt});
      }
      if (poly.size() < 3)
        fail(Errc::parse_error, "line " + std::to_string(line_no) + ": face with <3 vertices");
      for (size_t i = 1; i + 1 < poly.size(); ++i)
        faces.push_back({poly[0], poly[i], poly[i + 1]});
    }
  }
  if (faces.empty()) fail(Errc::parse_error, "no faces in " + path.string());

  Mesh mesh;
  if (!any_uv) {
    mesh.vertices = positions;
    for (const auto& f : faces)
      mesh.triangles.push_back({static_cast<uint32_t>(f[0].v), static_cast<uint32_t>(f[1].v),
                                static_cast<uint32_t>(f[2].v)});
  } else {
    // Split vertices per unique (position, uv) pair.
    std::map<std::pair<int, int>, uint32_t> remap;
    for (const auto& f : faces) {
      std::array<uint32_t, 3> tri;
      for (int k = 0; k < 3; ++k) {
        auto key = std::make_pair(f[k].v, f[k].vt);
        auto it = remap.find(key);
        if (it == remap.end()) {
          it = remap.emplace(key, static_cast<uint32_t>(mesh.vertices.size())).first;
          mesh.vertices.push_back(positions[f[k].v]);
          mesh.uvs.push_back(f[k].vt >= 0 ? texcoords[f[k].vt] : Vec2{0, 0});
        }
        tri[k] = it->second;
      }
      mesh.triangles.push_back(tri);
    }
  }

  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".keypoints.json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream kin(sidecar);
    nlohmann::json j;
    try {
      kin >> j;
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::parse_error, "keypoint sidecar " + sidecar.string() + ": " + e.what());
    }
    if (!j.is_object()) fail(Errc::parse_error, "keypoint sidecar must be a name->[x,y,z] object");
    for (auto& [name, coords] : j.items()) {
      if (!coords.is_array() || coords.size() != 3)
        fail(Errc::parse_error, "keypoint '" + name + "' must be [x,y,z]");
      mesh.keypoints3d[name] = {coords[0].get<double>(), coords[1].get<double>(),
                                coords[2].get<double>()};
    }
  }

  mesh.validate();
  return mesh;
}

inline void save_mesh_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << "# dsg mesh\n";
  for (const Vec3& v : mesh.vertices) out << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const Vec2& t : mesh.uvs) out << "vt " << t.x << " " << t.y << "\n";
  for (const auto& t : mesh.triangles) {
    if (mesh.has_uvs())
      out << "f " << t[0] + 1 << "/" << t[0] + 1 << " " << t[1] + 1 << "/" << t[1] + 1 << " "
          << t[2] + 1 << "/" << t[2] + 1 << "\n";
    else
      out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  if (!mesh.keypoints3d.empty()) {
    std::filesystem::path sidecar = path;
    sidecar.replace_extension(".keypoints.json");
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, p] : mesh.keypoints3d) j[name] = {p.x, p.y, p.z};
    std::ofstream kout(sidecar);
    kout << j.dump(2) << "\n";
  }
}

// --- primitive builders (demo assets and test fixtures) ---

// Axis-aligned box centered at the origin.
inline Mesh make_box(double sx, double sy, double sz) {
  Mesh m;
  double hx = sx / 2, hy = sy / 2, hz = sz / 2;
  const std::array<Vec3, 8> c = {Vec3{-hx, -hy, -hz}, {hx, -hy, -hz}, {hx, hy, -hz},
                                 {-hx, hy, -hz},      {-hx, -hy, hz}, {hx, -hy, hz},
                                 {hx, hy, hz},        {-hx, hy, hz}};
  m.vertices.assign(c.begin(), c.end());
  const int quads[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                           {2, 3, 7, 6}, {1, 2, 6, 5}, {3, 0, 4, 7}};
  for (const auto& q : quads) {
    m.triangles.push_back({(uint32_t)q[0], (uint32_t)q[1], (uint32_t)q[2]});
    m.triangles.push_back({(uint32_t)q[0], (uint32_t)q[2], (uint32_t)q[3]});
  }
  return m;
}

// Regular prism (n-gon cross-section in xy) with axis along z.
inline Mesh make_prism(int sides, double radius, double height) {
  Mesh m;
  double hz = height / 2;
  for (int ring = 0; ring < 2; ++ring) {
    double z = ring == 0 ? -hz : hz;
    for (int i = 0; i < sides; ++i) {
      double a = 2.0 * kPi * i / sides;
      m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), z});
    }
  }
  uint32_t bottom_center = static_cast<uint32_t>(m.vertices.size());
  m.vertices.push_back({0, 0, -hz});
  uint32_t top_center = static_cast<uint32_t>(m.vertices.size());
  m.vertices.push_back({0, 0, hz});
  for (int i = 0; i < sides; ++i) {
    uint32_t a = i, b = (i + 1) % sides;
    uint32_t a2 = a + sides, b2 = b + sides;
    m.triangles.push_back({a, b, b2});
    m.triangles.push_back({a, b2, a2});
    m.triangles.push_back({b, a, bottom_center});
    m.triangles.push_back({a2, b2, top_center});
  }
  return m;
}

inline Mesh make_uv_sphere(double radius, int rings, int segments) {
  Mesh m;
  for (int r = 0; r <= rings; ++r) {
    double phi = kPi * r / rings;  // 0 at +z pole
    for (int s = 0; s <= segments; ++s) {
      double theta = 2.0 * kPi * s / segments;
      m.vertices.push_back({radius * std::sin(phi) * std::cos(theta),
                            radius * std::sin(phi) * std::sin(theta), radius * std::cos(phi)});
      m.uvs.push_back({double(s) / segments, double(r) / rings});
    }
  }
  auto idx = [&](int r, int s) { return static_cast<uint32_t>(r * (segments + 1) + s); };
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      m.triangles.push_back({idx(r, s), idx(r + 1, s), idx(r + 1, s + 1)});
      m.triangles.push_back({idx(r, s), idx(r + 1, s + 1), idx(r, s + 1)});
    }
  return m;
}

}  // namespace dsg
