#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/annotations.hpp"
#include "dsg/core.hpp"

namespace dsg {

// COCO export conventions (documented for consumers):
//  * keypoints are continuous pixel coordinates with pixel centers at
//    integers; the visibility flag v is 0 = outside (x = y = 0),
//    1 = occluded, 2 = visible;
//  * segmentation polygons live on the pixel-corner lattice (coordinates in
//    [0, width] x [0, height]); holes appear as additional polygons and
//    re-rasterization is even-odd;
//  * bbox is [x, y, w, h] in pixel indices, the tight box of the mask;
//  * one annotation per image (single-object scenes), category id 1.

struct CocoImage {
  int64_t id = 0;
  std::string file_name;
  int width = 0, height = 0;
};

struct CocoAnnotationRecord {
  int64_t id = 0;
  int64_t image_id = 0;
  std::vector<double> bbox;          // x, y, w, h
  double area = 0;
  std::vector<Polygon> segmentation;
  std::vector<double> keypoints;     // x, y, v triplets in schema order
};

struct CocoDataset {
  std::string category;
  std::vector<std::string> keypoint_names;
  std::vector<CocoImage> images;
  std::vector<CocoAnnotationRecord> annotations;

  const CocoImage& image_by_id(int64_t id) const {
    for (const auto& im : images)
      if (im.id == id) return im;
    fail(Errc::no_ground_truth, "image id " + std::to_string(id) + " not in dataset");
  }
};

struct CocoExportRecord {
  int64_t image_id = 0;
  std::string file_name;
  int width = 0, height = 0;
  ImageAnnotation annotation;
  ImageU8 object_mask;  // binary, same resolution as the image
};

inline nlohmann::json keypoint_triplets_json(const ImageAnnotation& ann,
                                             const std::vector<std::string>& schema) {
  std::set<std::string> have;
  for (const auto& kp : ann.keypoints) have.insert(kp.name);
  std::set<std::string> want(schema.begin(), schema.end());
  if (have != want)
    fail(Errc::schema_error, "annotation keypoints do not match the category schema");

  nlohmann::json flat = nlohmann::json::array();
  for (const std::string& name : schema) {
    const ProjectedKeypoint* found = nullptr;
    for (const auto& kp : ann.keypoints)
      if (kp.name == name) found = &kp;
    int v = found->state == KeypointState::visible ? 2
            : found->state == KeypointState::occluded ? 1
                                                      : 0;
    double x = v == 0 ? 0.0 : found->pixel.x;
    double y = v == 0 ? 0.0 : found->pixel.y;
    flat.push_back(x);
    flat.push_back(y);
    flat.push_back(v);
  }
  return flat;
}

inline void export_coco(const std::vector<CocoExportRecord>& records, const std::string& category,
                        const std::vector<std::string>& keypoint_names,
                        const std::filesystem::path& out_path) {
  nlohmann::json images = nlohmann::json::array();
  nlohmann::json annotations = nlohmann::json::array();
  int64_t next_ann_id = 1;
  for (const auto& rec : records) {
    images.push_back({{"id", rec.image_id},
                      {"file_name", rec.file_name},
                      {"width", rec.width},
                      {"height", rec.height}});
    nlohmann::json seg = nlohmann::json::array();
    for (const Polygon& poly : trace_mask_polygons(rec.object_mask)) {
      nlohmann::json flat = nlohmann::json::array();
      for (const Vec2& p : poly) {
        flat.push_back(p.x);
        flat.push_back(p.y);
      }
      seg.push_back(flat);
    }
    const ImageAnnotation& ann = rec.annotation;
    nlohmann::json kps = keypoint_triplets_json(ann, keypoint_names);
    int num_labeled = 0;
    for (size_t i = 2; i < kps.size(); i += 3)
      if (kps[i].get<int>() > 0) ++num_labeled;
    annotations.push_back({{"id", next_ann_id++},
                           {"image_id", rec.image_id},
                           {"category_id", 1},
                           {"iscrowd", 0},
                           {"bbox", {ann.bbox.x0, ann.bbox.y0, ann.bbox.width(), ann.bbox.height()}},
                           {"area", static_cast<double>(ann.mask_area)},
                           {"segmentation", seg},
                           {"keypoints", kps},
                           {"num_keypoints", num_labeled}});
  }

  nlohmann::json root{
      {"info", {{"description", "dsg synthetic dataset"}, {"version", kVersion}}},
      {"licenses", nlohmann::json::array()},
      {"images", images},
      {"categories",
       nlohmann::json::array({{{"id", 1},
                               {"name", category},
                               {"supercategory", "object"},
                               {"keypoints", keypoint_names},
                               {"skeleton", nlohmann::json::array()}}})},
      {"annotations", annotations}};

  std::ofstream out(out_path);
  if (!out) fail(Errc::io_error, "cannot write " + out_path.string());
  out << root.dump() << "\n";
}

inline CocoDataset parse_coco(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }

  CocoDataset ds;
  for (const auto& im : j.at("images"))
    ds.images.push_back({im.at("id").get<int64_t>(), im.value("file_name", ""),
                         im.at("width").get<int>(), im.at("height").get<int>()});
  const auto& cats = j.at("categories");
  if (!cats.empty()) {
    ds.category = cats.at(0).value("name", "");
    if (cats.at(0).contains("keypoints"))
      for (const auto& n : cats.at(0).at("keypoints")) ds.keypoint_names.push_back(n.get<std::string>());
  }
  for (const auto& a : j.at("annotations")) {
    CocoAnnotationRecord rec;
    rec.id = a.value("id", int64_t{0});
    rec.image_id = a.at("image_id").get<int64_t>();
    if (a.contains("bbox")) for (const auto& v : a.at("bbox")) rec.bbox.push_back(v.get<double>());
    rec.area = a.value("area", 0.0);
    if (a.contains("segmentation"))
      for (const auto& poly : a.at("segmentation")) {
        Polygon p;
        for (size_t i = 0; i + 1 < poly.size(); i += 2)
          p.push_back({poly.at(i).get<double>(), poly.at(i + 1).get<double>()});
        rec.segmentation.push_back(std::move(p));
      }
    if (a.contains("keypoints"))
      for (const auto& v : a.at("keypoints")) rec.keypoints.push_back(v.get<double>());
    ds.annotations.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace dsg
