#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsg/coco.hpp"
#include "dsg/core.hpp"

namespace dsg {

// --- AKD ---

// Prediction file: COCO-results style, one entry per image, keypoints as
// (x, y, score) triplets in schema order; score <= 0 marks a missing channel.
struct KeypointResult {
  int64_t image_id = 0;
  std::vector<double> keypoints;
};

inline std::vector<KeypointResult> parse_keypoint_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  std::vector<KeypointResult> out;
  for (const auto& r : j) {
    KeypointResult res;
    res.image_id = r.at("image_id").get<int64_t>();
    for (const auto& v : r.at("keypoints")) res.keypoints.push_back(v.get<double>());
    out.push_back(std::move(res));
  }
  return out;
}

struct AkdOptions {
  // Penalty distance for a GT-visible keypoint with no prediction; < 0 means
  // the image diagonal.
  double missing_penalty = -1.0;
};

struct AkdReport {
  double mean_px = 0;
  std::map<std::string, double> per_channel;
  size_t pairs = 0;    // evaluated (image, channel) pairs
  size_t missing = 0;  // pairs that received the penalty
};

// Mean Euclidean pixel distance over all (image, channel) pairs whose ground
// truth keypoint is visible (v == 2). Occluded and outside GT channels are
// excluded.
inline AkdReport akd(const CocoDataset& gt, const std::vector<KeypointResult>& preds,
                     const AkdOptions& options = {}) {
  if (gt.keypoint_names.empty()) fail(Errc::no_ground_truth, "dataset has no keypoint schema");
  std::map<int64_t, const KeypointResult*> by_image;
  for (const auto& p : preds) by_image[p.image_id] = &p;

  const size_t channels = gt.keypoint_names.size();
  AkdReport report;
  std::map<std::string, std::pair<double, size_t>> per_channel;  // sum, count
  double total = 0;

  for (const auto& ann : gt.annotations) {
    if (ann.keypoints.size() < channels * 3) continue;
    const CocoImage& image = gt.image_by_id(ann.image_id);
    double penalty = options.missing_penalty >= 0
                         ? options.missing_penalty
                         : std::hypot(static_cast<double>(image.width),
                                      static_cast<double>(image.height));
    auto pred_it = by_image.find(ann.image_id);
    for (size_t c = 0; c < channels; ++c) {
      int v = static_cast<int>(ann.keypoints[3 * c + 2]);
      if (v != 2) continue;  // only GT-visible channels are evaluated
      double gx = ann.keypoints[3 * c], gy = ann.keypoints[3 * c + 1];

      double dist;
      bool have_pred = pred_it != by_image.end() &&
                       pred_it->second->keypoints.size() >= (c + 1) * 3 &&
                       pred_it->second->keypoints[3 * c + 2] > 0;
      if (have_pred) {
        double px = pred_it->second->keypoints[3 * c], py = pred_it->second->keypoints[3 * c + 1];
        dist = std::hypot(px - gx, py - gy);
      } else {
        dist = penalty;
        ++report.missing;
      }
      total += dist;
      auto& [sum, count] = per_channel[gt.keypoint_names[c]];
      sum += dist;
      ++count;
      ++report.pairs;
    }
  }
  if (report.pairs == 0) fail(Errc::empty_intersection, "no evaluable (image, channel) pairs");
  report.mean_px = total / report.pairs;
  for (const auto& [name, sc] : per_channel) report.per_channel[name] = sc.first / sc.second;
  return report;
}

// --- IoU ---

inline double mask_iou(const ImageU8& a, const ImageU8& b) {
  if (a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1)
    fail(Errc::shape_mismatch, "mask_iou: masks must be single-channel and equally sized");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    bool va = a.data[i] != 0, vb = b.data[i] != 0;
    inter += va && vb;
    uni += va || vb;
  }
  if (uni == 0) fail(Errc::both_empty, "mask_iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// --- COCO-style segmentation mAP ---

struct SegmentationResult {
  int64_t image_id = 0;
  double score = 0;
  std::vector<Polygon> segmentation;
};

inline std::vector<SegmentationResult> parse_segmentation_results(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  std::vector<SegmentationResult> out;
  for (const auto& r : j) {
    SegmentationResult res;
    res.image_id = r.at("image_id").get<int64_t>();
    res.score = r.at("score").get<double>();
    for (const auto& poly : r.at("segmentation")) {
      Polygon p;
      for (size_t i = 0; i + 1 < poly.size(); i += 2)
        p.push_back({poly.at(i).get<double>(), poly.at(i + 1).get<double>()});
      res.segmentation.push_back(std::move(p));
    }
    out.push_back(std::move(res));
  }
  return out;
}

inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k <= 9; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

struct MapReport {
  double map = 0;
  std::vector<double> thresholds;
  std::vector<double> ap;  // one per threshold
};

// Matches pycocotools semantics for the single-category case: detections are
// processed in descending score order (ties by input order); each matches the
// unmatched GT with the highest IoU >= t (IoU ties by lowest GT index); AP is
// 101-point interpolated precision; mAP averages the 10 thresholds.
inline MapReport coco_map(const CocoDataset& gt, const std::vector<SegmentationResult>& dets) {
  if (gt.annotations.empty()) fail(Errc::no_ground_truth, "no ground-truth annotations");

  std::map<int64_t, std::vector<size_t>> gt_by_image;
  for (size_t i = 0; i < gt.annotations.size(); ++i)
    gt_by_image[gt.annotations[i].image_id].push_back(i);

  // Rasterize everything once and cache detection/GT IoUs.
  std::map<int64_t, std::vector<ImageU8>> gt_masks;
  for (const auto& [image_id, indices] : gt_by_image) {
    const CocoImage& image = gt.image_by_id(image_id);
    for (size_t i : indices)
      gt_masks[image_id].push_back(
          rasterize_polygons(gt.annotations[i].segmentation, image.width, image.height));
  }

  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });

  // iou[d][g] for detections against the GTs of their image.
  std::vector<std::vector<double>> iou(dets.size());
  for (size_t d = 0; d < dets.size(); ++d) {
    auto it = gt_by_image.find(dets[d].image_id);
    if (it == gt_by_image.end()) continue;
    const CocoImage& image = gt.image_by_id(dets[d].image_id);
    ImageU8 det_mask = rasterize_polygons(dets[d].segmentation, image.width, image.height);
    for (size_t g = 0; g < it->second.size(); ++g) {
      const ImageU8& gm = gt_masks[dets[d].image_id][g];
      size_t inter = 0, uni = 0;
      for (size_t i = 0; i < gm.data.size(); ++i) {
        bool va = det_mask.data[i] != 0, vb = gm.data[i] != 0;
        inter += va && vb;
        uni += va || vb;
      }
      iou[d].push_back(uni == 0 ? 0.0 : static_cast<double>(inter) / uni);
    }
  }

  MapReport report;
  report.thresholds = coco_iou_thresholds();
  const size_t total_gt = gt.annotations.size();

  for (double t : report.thresholds) {
    std::map<int64_t, std::vector<bool>> matched;
    for (const auto& [image_id, indices] : gt_by_image)
      matched[image_id].assign(indices.size(), false);

    std::vector<bool> tp(order.size(), false);
    for (size_t rank = 0; rank < order.size(); ++rank) {
      size_t d = order[rank];
      auto it = gt_by_image.find(dets[d].image_id);
      if (it == gt_by_image.end()) continue;
      int best = -1;
      double best_iou = t;  // require iou >= t
      auto& used = matched[dets[d].image_id];
      for (size_t g = 0; g < it->second.size(); ++g) {
        if (used[g]) continue;
        double v = iou[d][g];
        if (v > best_iou || (best < 0 && v >= t)) {
          best = static_cast<int>(g);
          best_iou = v;
        }
      }
      if (best >= 0) {
        used[best] = true;
        tp[rank] = true;
      }
    }

    // Precision/recall over the ranked detections, then 101-point AP.
    std::vector<double> precision, recall;
    size_t tps = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
      tps += tp[rank];
      precision.push_back(static_cast<double>(tps) / (rank + 1));
      recall.push_back(static_cast<double>(tps) / total_gt);
    }
    double ap = 0;
    for (int r = 0; r <= 100; ++r) {
      double level = r / 100.0;
      double best_p = 0;
      for (size_t k = 0; k < precision.size(); ++k)
        if (recall[k] >= level) best_p = std::max(best_p, precision[k]);
      ap += best_p;
    }
    report.ap.push_back(ap / 101.0);
  }

  report.map = std::accumulate(report.ap.begin(), report.ap.end(), 0.0) / report.ap.size();
  return report;
}

}  // namespace dsg
