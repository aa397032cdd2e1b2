#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/core.hpp"
#include "dsg/diffusion.hpp"
#include "dsg/image.hpp"
#include "dsg/rasterizer.hpp"
#include "dsg/scene.hpp"

namespace dsg {

// Built-in keypoint schemas per category. Anything else must supply its own
// name list (pipeline config `keypoint_names`), which also defines the
// channel order for heatmaps and COCO export.
inline std::vector<std::string> category_keypoint_names(const std::string& category) {
  if (category == "mug") return {"handle", "bottom", "top_rim"};
  if (category == "shoe") return {"nose", "heel", "tip"};
  if (category == "tshirt")
    return {"shoulder_left", "neck_left",    "neck_right",    "shoulder_right",
            "sleeve_right_top", "sleeve_right_bottom", "armpit_right", "waist_right",
            "waist_left",   "armpit_left",  "sleeve_left_bottom", "sleeve_left_top"};
  return {};
}

struct ImageAnnotation {
  int64_t image_id = 0;
  int64_t scene_id = 0;
  int camera_index = 0;
  std::string category;
  std::vector<ProjectedKeypoint> keypoints;
  PixelBox bbox;          // tight box of the object mask, pixel indices
  size_t mask_area = 0;   // object pixels
};

// Keypoints from classify_keypoints, mask/bbox from the instance channel.
// Throws ObjectNotVisible when no object pixel survives occlusion; the
// pipeline drops such images and notes them in the manifest header.
inline ImageAnnotation annotate_image(const SceneSpec& scene, const PinholeCamera& cam,
                                      const Framebuffer& fb, const Mesh& object,
                                      const std::string& category, int64_t image_id,
                                      int camera_index) {
  ImageAnnotation ann;
  ann.image_id = image_id;
  ann.scene_id = scene.scene_id;
  ann.camera_index = camera_index;
  ann.category = category;
  ImageU8 mask = instance_mask(fb, kObjectId);
  ann.bbox = mask_bbox(mask);
  if (ann.bbox.empty()) fail(Errc::object_not_visible, "object mask is empty");
  ann.mask_area = count_nonzero(mask);
  ann.keypoints = classify_keypoints(scene, cam, fb, object);
  return ann;
}

struct HeatmapConfig {
  double sigma = 8.0;  // pixels
  int resolution = 512;

  void validate() const {
    if (sigma <= 0) fail(Errc::invalid_argument, "heatmap sigma must be > 0");
    if (resolution < 1) fail(Errc::invalid_argument, "heatmap resolution must be >= 1");
  }
};

// One channel per schema name, peak-normalized to 1: value at pixel p is
// max over that channel's visible keypoints of exp(-|p-k|^2 / (2 sigma^2)).
// Occluded and outside keypoints contribute nothing.
inline std::vector<ImageF> generate_heatmaps(const std::vector<ProjectedKeypoint>& keypoints,
                                             const std::vector<std::string>& channel_names,
                                             const HeatmapConfig& cfg) {
  cfg.validate();
  std::vector<ImageF> channels;
  channels.reserve(channel_names.size());
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (const std::string& name : channel_names) {
    ImageF ch(cfg.resolution, cfg.resolution, 1, 0.0f);
    for (const ProjectedKeypoint& kp : keypoints) {
      if (kp.name != name || kp.state != KeypointState::visible) continue;
      for (int y = 0; y < cfg.resolution; ++y)
        for (int x = 0; x < cfg.resolution; ++x) {
          double d2 = (x - kp.pixel.x) * (x - kp.pixel.x) + (y - kp.pixel.y) * (y - kp.pixel.y);
          float v = static_cast<float>(std::exp(-d2 * inv));
          ch.at(x, y) = std::max(ch.at(x, y), v);
        }
    }
    channels.push_back(std::move(ch));
  }
  return channels;
}

// --- mask <-> polygon ---
//
// Polygons trace the exact pixel-boundary lattice: pixel (x, y) occupies the
// unit square [x, x+1) x [y, y+1), vertices are integer corners, and loops
// carry the region interior on their left. Holes come out as separate loops;
// re-rasterization uses the even-odd rule at pixel centers (x+0.5, y+0.5),
// which reproduces the source mask exactly.

using Polygon = std::vector<Vec2>;

inline std::vector<Polygon> trace_mask_polygons(const ImageU8& mask) {
  const int w = mask.width, h = mask.height;
  auto set = [&](int x, int y) { return x >= 0 && x < w && y >= 0 && y < h && mask.at(x, y) != 0; };

  // Directed boundary edges, keyed by origin corner. A corner has at most two
  // outgoing edges (saddle configuration).
  struct Edge {
    int to_x, to_y;
    bool used = false;
  };
  std::map<std::pair<int, int>, std::vector<Edge>> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!set(x, y)) continue;
      if (!set(x, y - 1)) edges[{x + 1, y}].push_back({x, y});          // top side, walk -x
      if (!set(x, y + 1)) edges[{x, y + 1}].push_back({x + 1, y + 1});  // bottom side, walk +x
      if (!set(x - 1, y)) edges[{x, y}].push_back({x, y + 1});          // left side, walk +y
      if (!set(x + 1, y)) edges[{x + 1, y + 1}].push_back({x + 1, y});  // right side, walk -y
    }

  std::vector<Polygon> polygons;
  for (auto& [start, start_edges] : edges) {
    for (Edge& first : start_edges) {
      if (first.used) continue;
      Polygon poly;
      int cx = start.first, cy = start.second;
      int nx = first.to_x, ny = first.to_y;
      first.used = true;
      poly.push_back({static_cast<double>(cx), static_cast<double>(cy)});
      while (nx != start.first || ny != start.second) {
        poly.push_back({static_cast<double>(nx), static_cast<double>(ny)});
        int dx = nx - cx, dy = ny - cy;
        auto& outgoing = edges.at({nx, ny});
        Edge* chosen = nullptr;
        // At saddles prefer the left turn, which keeps diagonally-touching
        // regions in separate loops.
        int lx = nx + dy, ly = ny - dx;
        for (Edge& e : outgoing)
          if (!e.used && e.to_x == lx && e.to_y == ly) chosen = &e;
        if (!chosen)
          for (Edge& e : outgoing)
            if (!e.used) {
              chosen = &e;
              break;
            }
        if (!chosen) fail(Errc::invalid_argument, "mask boundary tracing failed");
        chosen->used = true;
        cx = nx;
        cy = ny;
        nx = chosen->to_x;
        ny = chosen->to_y;
      }
      // Merge collinear runs (loss-free simplification).
      Polygon simplified;
      size_t n = poly.size();
      for (size_t i = 0; i < n; ++i) {
        const Vec2& prev = poly[(i + n - 1) % n];
        const Vec2& cur = poly[i];
        const Vec2& next = poly[(i + 1) % n];
        double cross = (cur.x - prev.x) * (next.y - cur.y) - (cur.y - prev.y) * (next.x - cur.x);
        if (cross != 0.0) simplified.push_back(cur);
      }
      if (simplified.size() >= 3) polygons.push_back(std::move(simplified));
    }
  }
  return polygons;
}

// Even-odd scanline fill sampled at pixel centers (x+0.5, y+0.5).
inline ImageU8 rasterize_polygons(const std::vector<Polygon>& polygons, int width, int height) {
  ImageU8 out(width, height, 1);
  if (polygons.empty()) return out;
  for (int y = 0; y < height; ++y) {
    double py = y + 0.5;
    std::vector<double> crossings;
    for (const Polygon& poly : polygons) {
      size_t n = poly.size();
      for (size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        if ((a.y <= py) == (b.y <= py)) continue;  // no crossing
        double t = (py - a.y) / (b.y - a.y);
        crossings.push_back(a.x + t * (b.x - a.x));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (size_t k = 0; k + 1 < crossings.size(); k += 2) {
      int x0 = static_cast<int>(std::ceil(crossings[k] - 0.5));
      int x1 = static_cast<int>(std::floor(crossings[k + 1] - 0.5 - 1e-12));
      for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x) out.at(x, y) = 255;
    }
  }
  return out;
}

// --- per-image annotation JSON (schema version 1) ---

inline nlohmann::json to_json(const ImageAnnotation& ann) {
  nlohmann::json kps = nlohmann::json::array();
  for (const auto& kp : ann.keypoints)
    kps.push_back({{"name", kp.name},
                   {"u", kp.pixel.x},
                   {"v", kp.pixel.y},
                   {"state", keypoint_state_name(kp.state)},
                   {"depth", kp.depth}});
  return {{"version", 1},
          {"image_id", ann.image_id},
          {"scene_id", ann.scene_id},
          {"camera_index", ann.camera_index},
          {"category", ann.category},
          {"bbox", {ann.bbox.x0, ann.bbox.y0, ann.bbox.width(), ann.bbox.height()}},
          {"mask_area", ann.mask_area},
          {"keypoints", kps}};
}

inline ImageAnnotation annotation_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) fail(Errc::schema_error, "unsupported annotation schema version");
  ImageAnnotation ann;
  ann.image_id = j.at("image_id").get<int64_t>();
  ann.scene_id = j.at("scene_id").get<int64_t>();
  ann.camera_index = j.at("camera_index").get<int>();
  ann.category = j.at("category").get<std::string>();
  const auto& b = j.at("bbox");
  ann.bbox.x0 = b.at(0).get<int>();
  ann.bbox.y0 = b.at(1).get<int>();
  ann.bbox.x1 = ann.bbox.x0 + b.at(2).get<int>() - 1;
  ann.bbox.y1 = ann.bbox.y0 + b.at(3).get<int>() - 1;
  ann.mask_area = j.at("mask_area").get<size_t>();
  for (const auto& k : j.at("keypoints")) {
    ProjectedKeypoint kp;
    kp.name = k.at("name").get<std::string>();
    kp.pixel = {k.at("u").get<double>(), k.at("v").get<double>()};
    kp.state = keypoint_state_from_name(k.at("state").get<std::string>());
    kp.depth = k.at("depth").get<double>();
    ann.keypoints.push_back(std::move(kp));
  }
  return ann;
}

}  // namespace dsg
