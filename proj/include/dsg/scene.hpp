#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"
#include "dsg/geometry.hpp"
#include "dsg/mesh.hpp"
#include "dsg/rng.hpp"

namespace dsg {

// Instance ids used in every framebuffer and mask.
inline constexpr uint8_t kBackgroundId = 0;
inline constexpr uint8_t kTableId = 1;
inline constexpr uint8_t kObjectId = 2;

struct TableSpec {
  double width = 1.0;   // extent along local x, meters
  double depth = 1.0;   // extent along local y, meters
  double yaw = 0.0;     // rotation about world z, radians
  Vec3 center{0, 0, 0}; // top surface center, z = 0
};

// One randomized tabletop scene; the unit of reproducibility.
struct SceneSpec {
  int64_t scene_id = 0;
  std::string object_ref;       // mesh identifier in the catalog
  RigidTransform object_pose;   // mesh-local -> world
  TableSpec table;
  std::vector<PinholeCamera> cameras;
  uint64_t seed = 0;            // per-scene stream, derived from the master seed
};

struct Interval {
  double min = 0, max = 0;
  bool valid() const { return min <= max; }
  double sample(Rng& rng) const { return rng.uniform(min, max); }
};

struct SceneRandomizationConfig {
  Interval table_width_range{0.6, 1.2};
  Interval table_depth_range{0.6, 1.2};
  Interval table_yaw_range{0.0, 2.0 * kPi};
  Interval object_yaw_range{0.0, 2.0 * kPi};
  double object_xy_jitter = 0.3;        // fraction of table extent
  Interval camera_radius_range{0.4, 1.2};    // meters
  Interval camera_elevation_range{20.0, 90.0};  // degrees above the table plane
  int cameras_per_scene = 2;
  int resolution = 512;                 // square images
  double focal_px = 0.0;                // 0 -> use `resolution` (about 53 deg fov)
  double lookat_jitter = 0.05;          // meters, in the table plane

  void validate() const {
    for (const Interval* r : {&table_width_range, &table_depth_range, &table_yaw_range,
                              &object_yaw_range, &camera_radius_range, &camera_elevation_range})
      if (!r->valid()) fail(Errc::invalid_argument, "scene randomization range with min > max");
    if (camera_radius_range.min <= 0) fail(Errc::invalid_argument, "camera radius must be > 0");
    if (cameras_per_scene < 1) fail(Errc::invalid_argument, "cameras_per_scene must be >= 1");
    if (resolution < 8) fail(Errc::invalid_argument, "resolution too small");
    if (object_xy_jitter < 0 || object_xy_jitter > 1)
      fail(Errc::invalid_argument, "object_xy_jitter must be in [0,1]");
  }
};

struct MeshCatalog {
  std::vector<std::string> ids;
  std::vector<Mesh> meshes;

  size_t size() const { return meshes.size(); }
  const Mesh& by_ref(const std::string& ref) const {
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == ref) return meshes[i];
    fail(Errc::io_error, "mesh '" + ref + "' not in catalog");
  }
};

// Loads every *.obj under `dir` (sorted by filename, so catalog order is
// stable) together with keypoint sidecars.
inline MeshCatalog load_mesh_catalog(const std::filesystem::path& dir) {
  MeshCatalog cat;
  std::vector<std::filesystem::path> paths;
  if (!std::filesystem::is_directory(dir)) fail(Errc::io_error, "mesh dir not found: " + dir.string());
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) {
    cat.ids.push_back(p.stem().string());
    cat.meshes.push_back(load_mesh(p));
    if (cat.meshes.back().keypoints3d.empty())
      std::cerr << "warning: no keypoint sidecar for " << p.filename().string() << "\n";
  }
  if (cat.meshes.empty()) fail(Errc::io_error, "no .obj meshes in " + dir.string());
  return cat;
}

namespace detail {

// Bottom-face corners of `box`, expressed in table-local xy; all four must be
// inside the table rectangle for a valid placement.
inline bool footprint_on_table(const Aabb& box, const TableSpec& table, double tol = 1e-9) {
  const double c = std::cos(-table.yaw), s = std::sin(-table.yaw);
  const Vec2 corners[4] = {{box.min.x, box.min.y}, {box.max.x, box.min.y},
                           {box.min.x, box.max.y}, {box.max.x, box.max.y}};
  for (const Vec2& p : corners) {
    double dx = p.x - table.center.x, dy = p.y - table.center.y;
    double lx = c * dx - s * dy;
    double ly = s * dx + c * dy;
    if (std::abs(lx) > table.width / 2 + tol || std::abs(ly) > table.depth / 2 + tol) return false;
  }
  return true;
}

}  // namespace detail

// Samples a camera on a spherical shell around a jittered look-at point near
// the object. Resamples (up to 100 times) until the object center projects
// into the central 80% of the image, then falls back to aiming dead-center.
inline PinholeCamera sample_camera_pose(Rng& rng, const Vec3& object_center,
                                        const SceneRandomizationConfig& config) {
  if (config.camera_radius_range.min <= 0)
    fail(Errc::invalid_argument, "camera radius range must be positive");
  const int res = config.resolution;
  const double f = config.focal_px > 0 ? config.focal_px : static_cast<double>(res);

  PinholeCamera cam;
  cam.fx = cam.fy = f;
  cam.cx = res / 2.0;
  cam.cy = res / 2.0;
  cam.width = cam.height = res;

  auto build = [&](const Vec3& lookat) {
    double radius = config.camera_radius_range.sample(rng);
    double elevation = deg_to_rad(config.camera_elevation_range.sample(rng));
    double azimuth = rng.uniform(0.0, 2.0 * kPi);
    Vec3 offset{radius * std::cos(elevation) * std::cos(azimuth),
                radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation)};
    Vec3 eye = lookat + offset;
    Vec3 view = normalized(lookat - eye);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(view, up)) > 0.999) up = {0, 1, 0};
    if (std::abs(dot(view, up)) > 0.999) up = {1, 0, 0};
    cam.pose = look_at(eye, lookat, up);
  };

  auto centered = [&]() {
    Vec3 p = cam.world_to_camera(object_center);
    if (p.z <= 0) return false;
    Vec2 px = project_point(p, cam);
    double lo_u = 0.1 * (cam.width - 1), hi_u = 0.9 * (cam.width - 1);
    double lo_v = 0.1 * (cam.height - 1), hi_v = 0.9 * (cam.height - 1);
    return px.x >= lo_u && px.x <= hi_u && px.y >= lo_v && px.y <= hi_v;
  };

  for (int attempt = 0; attempt < 100; ++attempt) {
    double j = config.lookat_jitter;
    Vec3 lookat = object_center + Vec3{rng.uniform(-j, j), rng.uniform(-j, j), 0.0};
    build(lookat);
    if (centered()) return cam;
  }
  build(object_center);  // aims exactly at the center
  return cam;
}

// Deterministic function of (scene_id, master_seed, config). The object is
// yawed about z, jittered across the table and dropped so its lowest AABB
// point sits on the z = 0 plane.
inline SceneSpec compose_scene(int64_t scene_id, const MeshCatalog& catalog,
                               const SceneRandomizationConfig& config, uint64_t master_seed) {
  config.validate();
  if (catalog.size() == 0) fail(Errc::invalid_argument, "empty mesh catalog");

  Rng rng = Rng::from_stream(master_seed, static_cast<uint64_t>(scene_id), Stream::scene);

  SceneSpec spec;
  spec.scene_id = scene_id;
  spec.seed = mix_u64(master_seed, static_cast<uint64_t>(scene_id));

  size_t mesh_idx = rng.uniform_index(catalog.size());
  spec.object_ref = catalog.ids[mesh_idx];
  const Mesh& mesh = catalog.meshes[mesh_idx];

  spec.table.width = config.table_width_range.sample(rng);
  spec.table.depth = config.table_depth_range.sample(rng);
  spec.table.yaw = config.table_yaw_range.sample(rng);
  spec.table.center = {0, 0, 0};

  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    double yaw = config.object_yaw_range.sample(rng);
    double jx = config.object_xy_jitter * spec.table.width / 2;
    double jy = config.object_xy_jitter * spec.table.depth / 2;
    Vec2 local{rng.uniform(-jx, jx), rng.uniform(-jy, jy)};
    double c = std::cos(spec.table.yaw), s = std::sin(spec.table.yaw);
    Vec3 xy{spec.table.center.x + c * local.x - s * local.y,
            spec.table.center.y + s * local.x + c * local.y, 0.0};

    RigidTransform pose{Mat3::rotation_z(yaw), xy};
    pose.translation.z = -mesh_aabb(mesh, pose).min.z;  // rest on the plane
    Aabb box = mesh_aabb(mesh, pose);
    if (detail::footprint_on_table(box, spec.table)) {
      spec.object_pose = pose;
      placed = true;
    }
  }
  if (!placed)
    fail(Errc::placement_failure,
         "could not place object '" + spec.object_ref + "' on the table after 100 attempts");

  Vec3 object_center = mesh_aabb(mesh, spec.object_pose).center();
  for (int c = 0; c < config.cameras_per_scene; ++c)
    spec.cameras.push_back(sample_camera_pose(rng, object_center, config));
  return spec;
}

// Non-throwing invariant check; returns human-readable problems (empty when
// the spec is valid).
inline std::vector<std::string> validate_scene(const SceneSpec& spec, const MeshCatalog& catalog,
                                               int expected_cameras = -1) {
  std::vector<std::string> problems;
  const Mesh* mesh = nullptr;
  try {
    mesh = &catalog.by_ref(spec.object_ref);
  } catch (const Error&) {
    problems.push_back("object_ref not in catalog: " + spec.object_ref);
    return problems;
  }
  Aabb box = mesh_aabb(*mesh, spec.object_pose);
  if (std::abs(box.min.z) > 1e-9) problems.push_back("object does not rest on the table plane");
  if (!detail::footprint_on_table(box, spec.table))
    problems.push_back("object footprint extends beyond the table");
  if (spec.cameras.empty()) problems.push_back("scene has no cameras");
  if (expected_cameras >= 0 && static_cast<int>(spec.cameras.size()) != expected_cameras)
    problems.push_back("camera count does not match configuration");
  for (size_t i = 0; i < spec.cameras.size(); ++i) {
    const PinholeCamera& cam = spec.cameras[i];
    if (!cam.intrinsics_valid()) {
      problems.push_back("camera " + std::to_string(i) + " has invalid intrinsics");
      continue;
    }
    Vec3 p = cam.world_to_camera(box.center());
    if (p.z <= 0) {
      problems.push_back("camera " + std::to_string(i) + " has the object behind it");
      continue;
    }
    Vec2 px = project_point(p, cam);
    if (px.x < 0 || px.x > cam.width - 1 || px.y < 0 || px.y > cam.height - 1)
      problems.push_back("camera " + std::to_string(i) + " does not see the object center");
  }
  return problems;
}

// --- JSON serialization (schema version 1) ---

inline nlohmann::json to_json(const RigidTransform& t) {
  return {{"rotation", t.rotation.m}, {"translation", {t.translation.x, t.translation.y, t.translation.z}}};
}

inline RigidTransform rigid_from_json(const nlohmann::json& j) {
  RigidTransform t;
  auto r = j.at("rotation");
  for (int i = 0; i < 9; ++i) t.rotation.m[i] = r.at(i).get<double>();
  auto tr = j.at("translation");
  t.translation = {tr.at(0).get<double>(), tr.at(1).get<double>(), tr.at(2).get<double>()};
  return t;
}

inline nlohmann::json to_json(const PinholeCamera& cam) {
  return {{"fx", cam.fx},       {"fy", cam.fy},     {"cx", cam.cx},
          {"cy", cam.cy},       {"width", cam.width}, {"height", cam.height},
          {"pose", to_json(cam.pose)}};
}

inline PinholeCamera camera_from_json(const nlohmann::json& j) {
  PinholeCamera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  cam.pose = rigid_from_json(j.at("pose"));
  return cam;
}

inline nlohmann::json to_json(const SceneSpec& spec) {
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : spec.cameras) cams.push_back(to_json(c));
  return {{"version", 1},
          {"scene_id", spec.scene_id},
          {"object_ref", spec.object_ref},
          {"object_pose", to_json(spec.object_pose)},
          {"table",
           {{"width", spec.table.width},
            {"depth", spec.table.depth},
            {"yaw", spec.table.yaw},
            {"center", {spec.table.center.x, spec.table.center.y, spec.table.center.z}}}},
          {"cameras", cams},
          {"seed", spec.seed}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) fail(Errc::schema_error, "unsupported scene schema version");
  SceneSpec spec;
  spec.scene_id = j.at("scene_id").get<int64_t>();
  spec.object_ref = j.at("object_ref").get<std::string>();
  spec.object_pose = rigid_from_json(j.at("object_pose"));
  const auto& t = j.at("table");
  spec.table.width = t.at("width").get<double>();
  spec.table.depth = t.at("depth").get<double>();
  spec.table.yaw = t.at("yaw").get<double>();
  spec.table.center = {t.at("center").at(0).get<double>(), t.at("center").at(1).get<double>(),
                       t.at("center").at(2).get<double>()};
  for (const auto& c : j.at("cameras")) spec.cameras.push_back(camera_from_json(c));
  spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

inline void save_scene(const SceneSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
  out << to_json(spec).dump(2) << "\n";
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

}  // namespace dsg
