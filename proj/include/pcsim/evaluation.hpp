#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "pcsim/geometry.hpp"

namespace pcsim {

struct EvalConfig {
  std::vector<double> iou_thresholds = {0.5, 0.7};
  int spo_max_points = 5;   // ego point count at or below which a GT is SP-O
  double spe_ratio = 0.8;   // ego share at or above which a GT is SP-E
};

struct GroundTruthTarget {
  OrientedBox box;
  std::size_t ego_point_count = 0;
  std::size_t other_point_count = 0;
};

struct FrameEval {
  std::vector<OrientedBox> detections;
  std::vector<GroundTruthTarget> ground_truth;
};

enum class TargetCategory { SpO, Cp, SpE };

namespace detail {

/// Area of the convex polygon (cx, cy), n vertices.
inline double polygon_area(const double* cx, const double* cy, int n) {
  double a = 0.0;
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    a += cx[i] * cy[j] - cx[j] * cy[i];
  }
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman clip of convex polygon `subject` by the half-planes of
/// convex polygon `clip` (both counter-clockwise). Returns the intersection
/// area.
inline double convex_intersection_area(const double* sx, const double* sy,
                                       int sn, const double* cx,
                                       const double* cy, int cn) {
  constexpr int kMax = 24;
  double px[kMax], py[kMax], qx[kMax], qy[kMax];
  int pn = sn;
  std::copy(sx, sx + sn, px);
  std::copy(sy, sy + sn, py);
  for (int e = 0; e < cn && pn > 0; ++e) {
    const double ax = cx[e], ay = cy[e];
    const double bx = cx[(e + 1) % cn], by = cy[(e + 1) % cn];
    const double ex = bx - ax, ey = by - ay;
    int qn = 0;
    for (int i = 0; i < pn; ++i) {
      const int j = (i + 1) % pn;
      const double di = ex * (py[i] - ay) - ey * (px[i] - ax);
      const double dj = ex * (py[j] - ay) - ey * (px[j] - ax);
      if (di >= 0) {
        qx[qn] = px[i];
        qy[qn] = py[i];
        ++qn;
      }
      if ((di > 0 && dj < 0) || (di < 0 && dj > 0)) {
        const double t = di / (di - dj);
        qx[qn] = px[i] + t * (px[j] - px[i]);
        qy[qn] = py[i] + t * (py[j] - py[i]);
        ++qn;
      }
    }
    pn = qn;
    std::copy(qx, qx + qn, px);
    std::copy(qy, qy + qn, py);
  }
  return pn >= 3 ? polygon_area(px, py, pn) : 0.0;
}

}  // namespace detail

/// 3D IoU of yaw-aligned boxes: rotated-rectangle footprint intersection via
/// convex polygon clipping, times the vertical overlap.
inline double box_iou(const OrientedBox& a, const OrientedBox& b) {
  double ax[4], ay[4], bx[4], by[4];
  a.footprint(ax, ay);
  b.footprint(bx, by);
  const double inter_area =
      detail::convex_intersection_area(ax, ay, 4, bx, by, 4);
  const double z_lo = std::max(a.center.z - 0.5 * a.height,
                               b.center.z - 0.5 * b.height);
  const double z_hi = std::min(a.center.z + 0.5 * a.height,
                               b.center.z + 0.5 * b.height);
  const double inter_vol = inter_area * std::max(0.0, z_hi - z_lo);
  const double vol_a = a.length * a.width * a.height;
  const double vol_b = b.length * b.width * b.height;
  const double uni = vol_a + vol_b - inter_vol;
  return uni > 0 ? inter_vol / uni : 0.0;
}

inline TargetCategory categorize_target(const GroundTruthTarget& gt,
                                        const EvalConfig& cfg) {
  if (gt.ego_point_count <= static_cast<std::size_t>(cfg.spo_max_points))
    return TargetCategory::SpO;
  const double total =
      static_cast<double>(gt.ego_point_count + gt.other_point_count);
  if (static_cast<double>(gt.ego_point_count) / total >= cfg.spe_ratio)
    return TargetCategory::SpE;
  return TargetCategory::Cp;
}

inline std::vector<TargetCategory> categorize_targets(const FrameEval& frame,
                                                      const EvalConfig& cfg) {
  std::vector<TargetCategory> labels;
  labels.reserve(frame.ground_truth.size());
  for (const auto& gt : frame.ground_truth)
    labels.push_back(categorize_target(gt, cfg));
  return labels;
}

namespace detail {

/// Pooled greedy PR evaluation. `in_category[f][g]`: GT g of frame f counts;
/// out-of-category GT are ignored -- detections matched to them drop out of
/// the curve entirely. Returns nullopt when no in-category GT exists.
inline std::optional<double> ap_with_ignores(
    const std::vector<FrameEval>& frames, double iou_threshold,
    const std::vector<std::vector<bool>>& in_category) {
  struct Det {
    double confidence;
    std::size_t frame, index;
  };
  std::vector<Det> dets;
  std::size_t n_gt = 0;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t i = 0; i < frames[f].detections.size(); ++i)
      dets.push_back({frames[f].detections[i].confidence, f, i});
    for (std::size_t g = 0; g < frames[f].ground_truth.size(); ++g)
      if (in_category[f][g]) ++n_gt;
  }
  if (n_gt == 0) return std::nullopt;
  std::sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> gt_used(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f)
    gt_used[f].assign(frames[f].ground_truth.size(), false);

  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  for (const auto& det : dets) {
    const auto& frame = frames[det.frame];
    const OrientedBox& box = frame.detections[det.index];
    double best_iou = 0.0;
    std::size_t best_gt = frame.ground_truth.size();
    bool best_in_cat = false;
    for (std::size_t g = 0; g < frame.ground_truth.size(); ++g) {
      if (gt_used[det.frame][g]) continue;
      const double iou = box_iou(box, frame.ground_truth[g].box);
      if (iou < iou_threshold) continue;
      // Prefer in-category matches; among equals, the highest IoU.
      const bool in_cat = in_category[det.frame][g];
      if ((in_cat && !best_in_cat) ||
          (in_cat == best_in_cat && iou > best_iou)) {
        best_iou = iou;
        best_gt = g;
        best_in_cat = in_cat;
      }
    }
    if (best_gt == frame.ground_truth.size()) {
      ++fp;
    } else if (best_in_cat) {
      gt_used[det.frame][best_gt] = true;
      ++tp;
      const double recall = static_cast<double>(tp) / n_gt;
      const double precision = static_cast<double>(tp) / (tp + fp);
      ap += (recall - prev_recall) * precision;
      prev_recall = recall;
    } else {
      gt_used[det.frame][best_gt] = true;  // ignored: excluded from the curve
    }
  }
  return ap;
}

}  // namespace detail

/// AP across pooled frames at one IoU threshold: detections sorted by
/// descending confidence, greedy one-to-one matching, exact area under the
/// precision-recall step curve.
inline double compute_ap(const std::vector<FrameEval>& frames,
                         double iou_threshold) {
  std::vector<std::vector<bool>> all(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f)
    all[f].assign(frames[f].ground_truth.size(), true);
  return detail::ap_with_ignores(frames, iou_threshold, all).value_or(0.0);
}

struct CategoryAp {
  std::optional<double> sp_o, cp, sp_e;
};

/// Per-category AP; ground truth outside the category neither counts toward
/// recall nor penalizes matched detections.
inline CategoryAp compute_category_ap(const std::vector<FrameEval>& frames,
                                      double iou_threshold,
                                      const EvalConfig& cfg) {
  auto mask_for = [&](TargetCategory cat) {
    std::vector<std::vector<bool>> mask(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      mask[f].resize(frames[f].ground_truth.size());
      for (std::size_t g = 0; g < frames[f].ground_truth.size(); ++g)
        mask[f][g] = categorize_target(frames[f].ground_truth[g], cfg) == cat;
    }
    return mask;
  };
  CategoryAp result;
  result.sp_o = detail::ap_with_ignores(frames, iou_threshold,
                                        mask_for(TargetCategory::SpO));
  result.cp = detail::ap_with_ignores(frames, iou_threshold,
                                      mask_for(TargetCategory::Cp));
  result.sp_e = detail::ap_with_ignores(frames, iou_threshold,
                                        mask_for(TargetCategory::SpE));
  return result;
}

}  // namespace pcsim
