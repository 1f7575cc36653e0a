#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "frbdet/geometry.hpp"
#include "frbdet/image.hpp"

namespace frbdet {

struct EvalReport {
  int matched = 0;
  int detections_counted = 0;
  int gt_counted = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  std::vector<int> matched_per_image;
};

namespace detail {

// A detection overlapping an ignore region is dropped from the precision
// denominator: IoU >= threshold or intersection covering most of the box.
inline bool hits_ignore(const DetectionBox& det, const std::vector<TextPolygon>& gts,
                        double iou_threshold) {
  const double det_area = polygon_area(det.v);
  for (const auto& g : gts) {
    if (!g.ignore) continue;
    if (polygon_iou(det.v, g.v) >= iou_threshold) return true;
    if (det_area > 1e-12 &&
        polygon_intersection_area(det.v, g.v) / det_area > 0.5)
      return true;
  }
  return false;
}

// Maximum bipartite matching (Kuhn's augmenting paths) over IoU-qualified
// pairs; the optimal reference for the greedy protocol.
inline int max_matching(const std::vector<std::vector<int>>& adj, int n_right) {
  std::vector<int> match_right(static_cast<std::size_t>(n_right), -1);
  std::vector<char> visited;
  std::function<bool(int)> try_kuhn = [&](int u) -> bool {
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (visited[static_cast<std::size_t>(v)]) continue;
      visited[static_cast<std::size_t>(v)] = 1;
      if (match_right[static_cast<std::size_t>(v)] < 0 ||
          try_kuhn(match_right[static_cast<std::size_t>(v)])) {
        match_right[static_cast<std::size_t>(v)] = u;
        return true;
      }
    }
    return false;
  };
  int matched = 0;
  for (int u = 0; u < static_cast<int>(adj.size()); ++u) {
    visited.assign(static_cast<std::size_t>(n_right), 0);
    if (try_kuhn(u)) ++matched;
  }
  return matched;
}

}  // namespace detail

// ICDAR-style one-to-one matching at IoU >= iou_threshold. Greedy by
// descending detection score by default; `optimal` switches to maximum
// bipartite matching (the oracle route).
inline EvalReport evaluate_detections(const std::vector<std::vector<DetectionBox>>& detections,
                                      const std::vector<std::vector<TextPolygon>>& ground_truths,
                                      double iou_threshold = 0.5, bool optimal = false) {
  if (detections.size() != ground_truths.size())
    throw std::invalid_argument("evaluate_detections: image count mismatch");
  EvalReport report;
  for (std::size_t img = 0; img < detections.size(); ++img) {
    const auto& gts = ground_truths[img];
    std::vector<int> valid_gt;
    for (std::size_t g = 0; g < gts.size(); ++g)
      if (!gts[g].ignore) valid_gt.push_back(static_cast<int>(g));
    report.gt_counted += static_cast<int>(valid_gt.size());

    std::vector<DetectionBox> dets = detections[img];
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    int counted = 0;
    std::vector<std::size_t> active;  // not dropped by ignore regions
    for (std::size_t oi : order) {
      if (detail::hits_ignore(dets[oi], gts, iou_threshold)) continue;
      ++counted;
      active.push_back(oi);
    }
    report.detections_counted += counted;

    int matched_here = 0;
    if (optimal) {
      std::vector<std::vector<int>> adj(active.size());
      for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t g = 0; g < valid_gt.size(); ++g)
          if (polygon_iou(dets[active[a]].v, gts[static_cast<std::size_t>(valid_gt[g])].v) >=
              iou_threshold)
            adj[a].push_back(static_cast<int>(g));
      matched_here = detail::max_matching(adj, static_cast<int>(valid_gt.size()));
    } else {
      std::vector<bool> gt_used(valid_gt.size(), false);
      for (std::size_t a = 0; a < active.size(); ++a) {
        int best = -1;
        double best_iou = iou_threshold;
        for (std::size_t g = 0; g < valid_gt.size(); ++g) {
          if (gt_used[g]) continue;
          const double iou =
              polygon_iou(dets[active[a]].v, gts[static_cast<std::size_t>(valid_gt[g])].v);
          if (iou >= best_iou) {
            best_iou = iou;
            best = static_cast<int>(g);
          }
        }
        if (best >= 0) {
          gt_used[static_cast<std::size_t>(best)] = true;
          ++matched_here;
        }
      }
    }
    report.matched += matched_here;
    report.matched_per_image.push_back(matched_here);
  }
  report.precision = report.detections_counted > 0
                         ? static_cast<double>(report.matched) / report.detections_counted
                         : 0.0;
  report.recall =
      report.gt_counted > 0 ? static_cast<double>(report.matched) / report.gt_counted : 0.0;
  report.fscore = (report.precision + report.recall) > 0
                      ? 2.0 * report.precision * report.recall / (report.precision + report.recall)
                      : 0.0;
  return report;
}

// Directory protocol: every gt file <gt-dir>/X.txt pairs with <det-dir>/X.txt
// (a missing detection file counts as zero detections for that image).
inline EvalReport evaluate_directories(const std::string& det_dir, const std::string& gt_dir,
                                       double iou_threshold = 0.5, bool optimal = false) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw DataError("gt dir not found: " + gt_dir);
  if (!fs::is_directory(det_dir)) throw DataError("det dir not found: " + det_dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(gt_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw DataError("no .txt ground-truth files in " + gt_dir);
  std::vector<std::vector<DetectionBox>> dets;
  std::vector<std::vector<TextPolygon>> gts;
  for (const auto& name : names) {
    gts.push_back(load_icdar_gt(gt_dir + "/" + name));
    const std::string det_path = det_dir + "/" + name;
    dets.push_back(fs::exists(det_path) ? load_detections(det_path)
                                        : std::vector<DetectionBox>{});
  }
  return evaluate_detections(dets, gts, iou_threshold, optimal);
}

}  // namespace frbdet
