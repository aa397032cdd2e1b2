#pragma once

// Independent mAP oracle used by the unit and acceptance suites. For each
// IoU threshold it enumerates every injective detection->GT assignment that
// satisfies IoU >= t and keeps the lexicographic best in descending-score
// order, where a detection's quality is (IoU, -gt index) and unmatched ranks
// lowest. That exhaustive selection provably coincides with the greedy
// COCO matcher; AP is then computed directly from the 101-point definition.

#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "dsg/image.hpp"

namespace dsg::test {

struct OracleInstance {
  std::map<int64_t, std::vector<ImageU8>> gts;  // masks per image
  struct Det {
    int64_t image_id;
    double score;
    ImageU8 mask;
  };
  std::vector<Det> dets;
};

inline double oracle_map(const OracleInstance& inst) {
  std::vector<size_t> order(inst.dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return inst.dets[a].score > inst.dets[b].score;
  });

  size_t total_gt = 0;
  for (const auto& [id, masks] : inst.gts) total_gt += masks.size();

  double ap_sum = 0;
  for (int k = 0; k <= 9; ++k) {
    double t = (50 + 5 * k) / 100.0;

    struct Quality {
      double iou;
      int gt;
    };
    std::vector<std::vector<Quality>> cands(order.size());
    for (size_t r = 0; r < order.size(); ++r) {
      const auto& det = inst.dets[order[r]];
      auto it = inst.gts.find(det.image_id);
      if (it == inst.gts.end()) continue;
      for (size_t g = 0; g < it->second.size(); ++g) {
        size_t inter = 0, uni = 0;
        for (size_t i = 0; i < det.mask.data.size(); ++i) {
          inter += det.mask.data[i] && it->second[g].data[i];
          uni += det.mask.data[i] || it->second[g].data[i];
        }
        double iou = uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
        if (iou >= t) cands[r].push_back({iou, static_cast<int>(g)});
      }
    }

    std::vector<int> best_assign;
    std::vector<double> best_key;
    std::vector<int> assign(order.size(), -1);
    std::vector<double> key(order.size(), -1.0);
    std::function<void(size_t, std::map<int64_t, std::set<int>>&)> recurse =
        [&](size_t r, std::map<int64_t, std::set<int>>& used) {
          if (r == order.size()) {
            if (best_key.empty() || key > best_key) {
              best_key = key;
              best_assign = assign;
            }
            return;
          }
          int64_t img = inst.dets[order[r]].image_id;
          assign[r] = -1;
          key[r] = -1.0;
          recurse(r + 1, used);
          for (const auto& c : cands[r]) {
            if (used[img].count(c.gt)) continue;
            assign[r] = c.gt;
            key[r] = c.iou + (1.0 - c.gt * 1e-9);  // IoU dominates, gt index breaks ties
            used[img].insert(c.gt);
            recurse(r + 1, used);
            used[img].erase(c.gt);
          }
          assign[r] = -1;
          key[r] = -1.0;
        };
    std::map<int64_t, std::set<int>> used;
    recurse(0, used);

    std::vector<double> precision, recall;
    size_t tp = 0;
    for (size_t r = 0; r < order.size(); ++r) {
      if (!best_assign.empty() && best_assign[r] >= 0) ++tp;
      precision.push_back(static_cast<double>(tp) / (r + 1));
      recall.push_back(total_gt == 0 ? 0 : static_cast<double>(tp) / total_gt);
    }
    double ap = 0;
    for (int ri = 0; ri <= 100; ++ri) {
      double level = ri / 100.0;
      double best_p = 0;
      for (size_t i = 0; i < precision.size(); ++i)
        if (recall[i] >= level) best_p = std::max(best_p, precision[i]);
      ap += best_p;
    }
    ap_sum += ap / 101.0;
  }
  return ap_sum / 10.0;
}

}  // namespace dsg::test
