#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "simmemda/core.hpp"

namespace simmemda::harness {

using core::Detection;

struct PrCurve {
  int class_id = 0;
  double iou_threshold = 0.5;
  std::vector<double> precision;
  std::vector<double> recall;
};

struct EvalReport {
  std::vector<double> iou_thresholds;
  // ap_per_threshold[t] = mean AP over classes at iou_thresholds[t]
  std::vector<double> ap_per_threshold;
  double map50 = 0.0;
  double map5095 = 0.0;
  std::vector<PrCurve> pr_curves;
  // classes with neither predictions nor ground truth score AP 1
  std::vector<int> empty_classes;
};

namespace detail {

struct ClassEval {
  double ap = 0.0;
  PrCurve curve;
};

// Score-ordered greedy matching (ties by input index), each prediction
// taking the unmatched same-image GT of highest IoU >= threshold. AP by
// all-points interpolation under the monotone precision envelope.
inline ClassEval eval_class(const std::vector<Detection>& preds,
                            const std::vector<Detection>& gts,
                            double iou_thr) {
  ClassEval out;
  out.curve.iou_threshold = iou_thr;
  if (gts.empty()) {
    out.ap = preds.empty() ? 1.0 : 0.0;
    return out;
  }
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  std::vector<bool> gt_used(gts.size(), false);
  std::size_t tp = 0, fp = 0;
  for (std::size_t oi : order) {
    const Detection& p = preds[oi];
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g] || gts[g].image_id != p.image_id) continue;
      const double v = core::iou(p.box, gts[g].box);
      if (v >= iou_thr && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size()) {
      gt_used[best] = true;
      ++tp;
    } else {
      ++fp;
    }
    out.curve.precision.push_back(static_cast<double>(tp) /
                                  static_cast<double>(tp + fp));
    out.curve.recall.push_back(static_cast<double>(tp) /
                               static_cast<double>(gts.size()));
  }
  // monotone precision envelope, area via recall increments
  const std::size_t n = out.curve.precision.size();
  std::vector<double> env(out.curve.precision);
  for (std::size_t i = n; i-- > 1;) env[i - 1] = std::max(env[i - 1], env[i]);
  double ap = 0.0, prev_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (out.curve.recall[i] - prev_r) * env[i];
    prev_r = out.curve.recall[i];
  }
  out.ap = ap;
  return out;
}

}  // namespace detail

/// Detection mAP evaluation. Per class and IoU threshold:
/// greedy score-ordered matching, cumulative P/R, all-points AP; mAP
/// averages over classes, the 0.5:0.05:0.95 variant over thresholds.
inline EvalReport eval_detections(const std::vector<Detection>& preds,
                                  const std::vector<Detection>& gts,
                                  std::vector<double> iou_thresholds = {}) {
  if (iou_thresholds.empty())
    for (int t = 0; t < 10; ++t) iou_thresholds.push_back(0.5 + 0.05 * t);
  EvalReport rep;
  rep.iou_thresholds = iou_thresholds;

  std::set<int> classes;
  for (const Detection& d : preds) classes.insert(d.class_id);
  for (const Detection& d : gts) classes.insert(d.class_id);
  if (classes.empty()) classes.insert(0);

  std::map<int, std::vector<Detection>> preds_by_class, gts_by_class;
  for (const Detection& d : preds) preds_by_class[d.class_id].push_back(d);
  for (const Detection& d : gts) gts_by_class[d.class_id].push_back(d);

  for (double thr : iou_thresholds) {
    double ap_sum = 0.0;
    for (int cls : classes) {
      const auto& cp = preds_by_class[cls];
      const auto& cg = gts_by_class[cls];
      if (cp.empty() && cg.empty() &&
          std::find(rep.empty_classes.begin(), rep.empty_classes.end(), cls) ==
              rep.empty_classes.end())
        rep.empty_classes.push_back(cls);
      detail::ClassEval ce = detail::eval_class(cp, cg, thr);
      ce.curve.class_id = cls;
      ap_sum += ce.ap;
      rep.pr_curves.push_back(std::move(ce.curve));
    }
    rep.ap_per_threshold.push_back(ap_sum / static_cast<double>(classes.size()));
  }
  for (std::size_t t = 0; t < iou_thresholds.size(); ++t)
    if (std::abs(iou_thresholds[t] - 0.5) < 1e-12)
      rep.map50 = rep.ap_per_threshold[t];
  rep.map5095 = std::accumulate(rep.ap_per_threshold.begin(),
                                rep.ap_per_threshold.end(), 0.0) /
                static_cast<double>(rep.ap_per_threshold.size());
  return rep;
}

}  // namespace simmemda::harness
