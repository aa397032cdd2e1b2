#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dsg/core.hpp"
#include "dsg/geometry.hpp"
#include "dsg/image.hpp"
#include "dsg/mesh.hpp"
#include "dsg/scene.hpp"

namespace dsg {

// Depth stored per pixel is camera-frame z in meters (not distance along the
// ray); the diffusion control image is derived from it. No-hit sentinel is
// +inf in memory and 0 in the 16-bit PNG encoding (0.1 mm per unit).
inline constexpr float kNoDepth = std::numeric_limits<float>::infinity();
inline constexpr double kDepthPngScale = 1e-4;  // meters per PNG unit
inline constexpr double kZNear = 1e-4;          // near-plane clip, meters

struct Framebuffer {
  int width = 0, height = 0;
  std::vector<float> depth;       // camera-frame z, +inf where nothing was hit
  std::vector<uint8_t> instance;  // 0 background, 1 table, 2 object
  ImageU8 rgb;                    // empty until shaded or textured

  // Shading inputs, filled when rasterizing with `with_aux` (not serialized).
  std::vector<Vec3> aux_local;    // hit position, mesh-local frame
  std::vector<Vec3> aux_normal;   // unit world normal, flipped toward camera
  std::vector<Vec2> aux_uv;
  bool has_aux = false;

  Framebuffer() = default;
  Framebuffer(int w, int h, bool with_aux) : width(w), height(h) {
    size_t n = static_cast<size_t>(w) * h;
    depth.assign(n, kNoDepth);
    instance.assign(n, 0);
    if (with_aux) {
      aux_local.assign(n, {});
      aux_normal.assign(n, {});
      aux_uv.assign(n, {});
      has_aux = true;
    }
  }

  size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
  bool covered(int x, int y) const { return instance[index(x, y)] != 0; }
};

struct RenderObject {
  const Mesh* mesh = nullptr;
  RigidTransform pose;
  uint8_t instance_id = 0;
};

namespace detail {

struct ClipVertex {
  Vec3 cam;    // camera (projection) frame
  Vec3 local;  // mesh-local position
  Vec2 uv;
};

inline ClipVertex lerp(const ClipVertex& a, const ClipVertex& b, double t) {
  return {a.cam + (b.cam - a.cam) * t, a.local + (b.local - a.local) * t,
          {a.uv.x + (b.uv.x - a.uv.x) * t, a.uv.y + (b.uv.y - a.uv.y) * t}};
}

// Clip a polygon against the z >= kZNear half-space.
inline void clip_near(std::vector<ClipVertex>& poly, std::vector<ClipVertex>& out) {
  out.clear();
  for (size_t i = 0; i < poly.size(); ++i) {
    const ClipVertex& a = poly[i];
    const ClipVertex& b = poly[(i + 1) % poly.size()];
    bool a_in = a.cam.z >= kZNear, b_in = b.cam.z >= kZNear;
    if (a_in) out.push_back(a);
    if (a_in != b_in) {
      double t = (kZNear - a.cam.z) / (b.cam.z - a.cam.z);
      out.push_back(lerp(a, b, t));
    }
  }
}

inline double edge_function(const Vec2& a, const Vec2& b, double px, double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// Top-left fill rule bias for edge a->b (positive-area winding, y down):
// pixels exactly on a top or left edge count as covered.
inline bool edge_is_top_left(const Vec2& a, const Vec2& b) {
  double dx = b.x - a.x, dy = b.y - a.y;
  return dy == 0.0 ? dx > 0.0 : dy < 0.0;
}

}  // namespace detail

// Z-buffer rasterization with perspective-correct interpolation. A pixel is
// covered when its center lies inside the triangle; ties on shared edges are
// broken by the top-left rule, so adjacent triangles never double-cover.
inline Framebuffer rasterize_objects(std::span<const RenderObject> objects,
                                     const PinholeCamera& cam, bool with_aux = true) {
  Framebuffer fb(cam.width, cam.height, with_aux);

  std::vector<detail::ClipVertex> poly, clipped;
  for (const RenderObject& obj : objects) {
    const Mesh& mesh = *obj.mesh;
    for (const auto& tri : mesh.triangles) {
      poly.clear();
      Vec3 world[3];
      for (int k = 0; k < 3; ++k) {
        const Vec3& local = mesh.vertices[tri[k]];
        world[k] = obj.pose * local;
        detail::ClipVertex cv;
        cv.cam = cam.world_to_camera(world[k]);
        cv.local = local;
        cv.uv = mesh.has_uvs() ? mesh.uvs[tri[k]] : Vec2{0, 0};
        poly.push_back(cv);
      }

      Vec3 face_normal = cross(world[1] - world[0], world[2] - world[0]);
      double nlen = norm(face_normal);
      if (nlen == 0.0) continue;  // degenerate triangle
      face_normal = face_normal * (1.0 / nlen);
      // Flip toward the camera; surfaces are shaded two-sided.
      Vec3 to_surface = world[0] - cam.pose.translation;
      if (dot(face_normal, to_surface) > 0) face_normal = -face_normal;

      detail::clip_near(poly, clipped);
      if (clipped.size() < 3) continue;

      for (size_t fan = 1; fan + 1 < clipped.size(); ++fan) {
        detail::ClipVertex v[3] = {clipped[0], clipped[fan], clipped[fan + 1]};
        Vec2 p[3];
        double z[3];
        for (int k = 0; k < 3; ++k) {
          p[k] = project_point(v[k].cam, cam);
          z[k] = v[k].cam.z;
        }
        double area = detail::edge_function(p[0], p[1], p[2].x, p[2].y);
        if (area == 0.0) continue;
        if (area < 0.0) {
          std::swap(v[1], v[2]);
          std::swap(p[1], p[2]);
          std::swap(z[1], z[2]);
          area = -area;
        }

        int x0 = std::max(0, static_cast<int>(std::ceil(std::min({p[0].x, p[1].x, p[2].x}))));
        int x1 = std::min(fb.width - 1,
                          static_cast<int>(std::floor(std::max({p[0].x, p[1].x, p[2].x}))));
        int y0 = std::max(0, static_cast<int>(std::ceil(std::min({p[0].y, p[1].y, p[2].y}))));
        int y1 = std::min(fb.height - 1,
                          static_cast<int>(std::floor(std::max({p[0].y, p[1].y, p[2].y}))));
        if (x0 > x1 || y0 > y1) continue;

        const bool tl0 = detail::edge_is_top_left(p[1], p[2]);
        const bool tl1 = detail::edge_is_top_left(p[2], p[0]);
        const bool tl2 = detail::edge_is_top_left(p[0], p[1]);
        const double inv_area = 1.0 / area;
        const double w0 = 1.0 / z[0], w1 = 1.0 / z[1], w2 = 1.0 / z[2];

        for (int py = y0; py <= y1; ++py) {
          for (int px = x0; px <= x1; ++px) {
            double e0 = detail::edge_function(p[1], p[2], px, py);
            double e1 = detail::edge_function(p[2], p[0], px, py);
            double e2 = detail::edge_function(p[0], p[1], px, py);
            bool inside = (e0 > 0 || (e0 == 0 && tl0)) && (e1 > 0 || (e1 == 0 && tl1)) &&
                          (e2 > 0 || (e2 == 0 && tl2));
            if (!inside) continue;

            double l0 = e0 * inv_area, l1 = e1 * inv_area, l2 = e2 * inv_area;
            double inv_z = l0 * w0 + l1 * w1 + l2 * w2;
            float zpix = static_cast<float>(1.0 / inv_z);
            size_t idx = fb.index(px, py);
            if (zpix >= fb.depth[idx]) continue;

            fb.depth[idx] = zpix;
            fb.instance[idx] = obj.instance_id;
            if (with_aux) {
              double zc = 1.0 / inv_z;
              fb.aux_local[idx] = (v[0].local * (l0 * w0) + v[1].local * (l1 * w1) +
                                   v[2].local * (l2 * w2)) *
                                  zc;
              fb.aux_uv[idx] = {(v[0].uv.x * l0 * w0 + v[1].uv.x * l1 * w1 + v[2].uv.x * l2 * w2) * zc,
                                (v[0].uv.y * l0 * w0 + v[1].uv.y * l1 * w1 + v[2].uv.y * l2 * w2) * zc};
              fb.aux_normal[idx] = face_normal;
            }
          }
        }
      }
    }
  }
  return fb;
}

// Table rectangle as a two-triangle mesh in its local frame (center at the
// origin, top surface in z = 0). No UVs: the triplanar fallback textures it
// in meters.
inline Mesh make_table_mesh(const TableSpec& table) {
  Mesh m;
  double hw = table.width / 2, hd = table.depth / 2;
  m.vertices = {{-hw, -hd, 0}, {hw, -hd, 0}, {hw, hd, 0}, {-hw, hd, 0}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

inline RigidTransform table_pose(const TableSpec& table) {
  return {Mat3::rotation_z(table.yaw), table.center};
}

inline std::vector<RenderObject> scene_render_objects(const SceneSpec& scene, const Mesh& table,
                                                      const Mesh& object, bool include_object) {
  std::vector<RenderObject> objs;
  objs.push_back({&table, table_pose(scene.table), kTableId});
  if (include_object) objs.push_back({&object, scene.object_pose, kObjectId});
  return objs;
}

inline Framebuffer rasterize(const SceneSpec& scene, const PinholeCamera& cam,
                             const MeshCatalog& meshes, bool with_aux = true) {
  Mesh table = make_table_mesh(scene.table);
  auto objs = scene_render_objects(scene, table, meshes.by_ref(scene.object_ref), true);
  return rasterize_objects(objs, cam, with_aux);
}

// Same scene with the object mesh excluded; the three-stage texturing
// pipeline conditions its first pass on this render.
inline Framebuffer render_depth_without_object(const SceneSpec& scene, const PinholeCamera& cam,
                                               const MeshCatalog& meshes) {
  Mesh table = make_table_mesh(scene.table);
  auto objs = scene_render_objects(scene, table, meshes.by_ref(scene.object_ref), false);
  return rasterize_objects(objs, cam, false);
}

// --- keypoint classification ---

enum class KeypointState { visible, occluded, outside };

inline const char* keypoint_state_name(KeypointState s) {
  switch (s) {
    case KeypointState::visible: return "visible";
    case KeypointState::occluded: return "occluded";
    case KeypointState::outside: return "outside";
  }
  return "?";
}

inline KeypointState keypoint_state_from_name(const std::string& s) {
  if (s == "visible") return KeypointState::visible;
  if (s == "occluded") return KeypointState::occluded;
  if (s == "outside") return KeypointState::outside;
  fail(Errc::parse_error, "unknown keypoint state '" + s + "'");
}

struct ProjectedKeypoint {
  std::string name;
  Vec2 pixel{-1, -1};  // continuous; (-1,-1) when behind the camera
  KeypointState state = KeypointState::outside;
  double depth = 0;    // camera-frame z, meters
};

inline constexpr double kVisibilityEps = 5e-3;  // meters

// A keypoint is visible when its rounded pixel belongs to its own instance
// and the depth test passes there. The instance check (rather than depth
// alone) keeps annotations watertight: keypoints on the silhouette, or
// touching the table, would otherwise pass the depth test at a pixel outside
// the object mask.
inline std::vector<ProjectedKeypoint> classify_keypoints(const SceneSpec& scene,
                                                         const PinholeCamera& cam,
                                                         const Framebuffer& fb, const Mesh& object,
                                                         double eps = kVisibilityEps) {
  std::vector<ProjectedKeypoint> out;
  for (const auto& [name, p_local] : object.keypoints3d) {
    ProjectedKeypoint kp;
    kp.name = name;
    Vec3 p_cam = cam.world_to_camera(scene.object_pose * p_local);
    kp.depth = p_cam.z;
    if (p_cam.z <= 0) {
      out.push_back(kp);  // behind the camera -> outside
      continue;
    }
    kp.pixel = project_point(p_cam, cam);
    int px = static_cast<int>(std::lround(kp.pixel.x));
    int py = static_cast<int>(std::lround(kp.pixel.y));
    if (px < 0 || px >= fb.width || py < 0 || py >= fb.height) {
      kp.state = KeypointState::outside;
    } else if (fb.instance[fb.index(px, py)] == kObjectId &&
               p_cam.z <= fb.depth[fb.index(px, py)] + eps) {
      kp.state = KeypointState::visible;
    } else {
      kp.state = KeypointState::occluded;
    }
    out.push_back(kp);
  }
  return out;
}

// --- serialized channels ---

inline ImageU16 depth_to_png16(const Framebuffer& fb) {
  ImageU16 img(fb.width, fb.height, 1);
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      float d = fb.depth[fb.index(x, y)];
      if (std::isinf(d)) continue;  // stays 0
      img.at(x, y) = static_cast<uint16_t>(
          std::clamp<long>(std::lround(d / kDepthPngScale), 1, 65535));
    }
  return img;
}

inline ImageU8 instance_to_png(const Framebuffer& fb) {
  ImageU8 img(fb.width, fb.height, 1);
  for (size_t i = 0; i < fb.instance.size(); ++i) img.data[i] = fb.instance[i];
  return img;
}

// Rebuild the geometry channels of a framebuffer from serialized PNGs (the
// texturing stage consumes renders from disk).
inline Framebuffer framebuffer_from_pngs(const ImageU16& depth_png, const ImageU8& instance_png) {
  if (depth_png.width != instance_png.width || depth_png.height != instance_png.height)
    fail(Errc::shape_mismatch, "depth/instance size mismatch");
  Framebuffer fb(depth_png.width, depth_png.height, false);
  for (int y = 0; y < fb.height; ++y)
    for (int x = 0; x < fb.width; ++x) {
      uint16_t v = depth_png.at(x, y);
      size_t idx = fb.index(x, y);
      fb.instance[idx] = instance_png.at(x, y);
      fb.depth[idx] = v == 0 ? kNoDepth : static_cast<float>(v * kDepthPngScale);
    }
  return fb;
}

// Intrinsics for the same field of view at a different resolution (pixel
// centers at integers: the continuous image spans [-0.5, w-0.5]).
inline PinholeCamera with_resolution(const PinholeCamera& cam, int width, int height) {
  PinholeCamera out = cam;
  double sx = static_cast<double>(width) / cam.width;
  double sy = static_cast<double>(height) / cam.height;
  out.fx = cam.fx * sx;
  out.fy = cam.fy * sy;
  out.cx = (cam.cx + 0.5) * sx - 0.5;
  out.cy = (cam.cy + 0.5) * sy - 0.5;
  out.width = width;
  out.height = height;
  return out;
}

}  // namespace dsg
