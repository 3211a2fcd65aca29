#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "simmemda/core.hpp"

namespace simmemda::mixer {

using core::Box;
using core::Detection;
using core::Tensor;

/// Quadrant indicator mask. Regions 0-3 row-major: TL, TR, BL, BR,
/// split at floor(W/2), floor(H/2).
struct RegionMask {
  int region_id = 0;
  Tensor mask;  // [H,W], 1 inside the region
  std::size_t width = 0, height = 0;

  /// Region rectangle in pixel coordinates.
  Box rect() const {
    const double hx = std::floor(static_cast<double>(width) / 2.0);
    const double hy = std::floor(static_cast<double>(height) / 2.0);
    const double w = static_cast<double>(width), h = static_cast<double>(height);
    switch (region_id) {
      case 0: return Box(0, 0, hx, hy);
      case 1: return Box(hx, 0, w, hy);
      case 2: return Box(0, hy, hx, h);
      default: return Box(hx, hy, w, h);
    }
  }
};

inline RegionMask make_region_mask(int region_id, std::size_t width,
                                   std::size_t height) {
  if (region_id < 0 || region_id > 3)
    throw std::invalid_argument("make_region_mask: region_id outside 0-3");
  RegionMask rm;
  rm.region_id = region_id;
  rm.width = width;
  rm.height = height;
  rm.mask = Tensor::zeros({height, width});
  const std::size_t hx = width / 2, hy = height / 2;
  const std::size_t x0 = (region_id % 2 == 0) ? 0 : hx;
  const std::size_t x1 = (region_id % 2 == 0) ? hx : width;
  const std::size_t y0 = (region_id < 2) ? 0 : hy;
  const std::size_t y1 = (region_id < 2) ? hy : height;
  for (std::size_t i = y0; i < y1; ++i)
    for (std::size_t j = x0; j < x1; ++j) rm.mask.at(i, j) = 1.0;
  return rm;
}

/// Mean pseudo-label confidence per quadrant; detections assigned by
/// box center, empty quadrants score 0.
inline std::array<double, 4> quadrant_confidences(
    const std::vector<Detection>& dets, std::pair<double, double> image_size) {
  const auto [w, h] = image_size;
  if (!(w > 0 && h > 0))
    throw std::invalid_argument("quadrant_confidences: bad image size");
  const double hx = std::floor(w / 2.0), hy = std::floor(h / 2.0);
  std::array<double, 4> sums{0, 0, 0, 0};
  std::array<int, 4> counts{0, 0, 0, 0};
  for (const Detection& d : dets) {
    const double cx = 0.5 * (d.box.x1 + d.box.x2);
    const double cy = 0.5 * (d.box.y1 + d.box.y2);
    const int q = (cy < hy ? 0 : 2) + (cx < hx ? 0 : 1);
    sums[static_cast<std::size_t>(q)] += d.score;
    ++counts[static_cast<std::size_t>(q)];
  }
  std::array<double, 4> out{0, 0, 0, 0};
  for (std::size_t q = 0; q < 4; ++q)
    if (counts[q] > 0) out[q] = sums[q] / counts[q];
  return out;
}

/// Argmax quadrant; ties go to the lowest region id.
inline int select_region(const std::array<double, 4>& scores) {
  int best = 0;
  for (int q = 1; q < 4; ++q)
    if (scores[static_cast<std::size_t>(q)] > scores[static_cast<std::size_t>(best)])
      best = q;
  return best;
}

inline RegionMask select_region_mask(const std::array<double, 4>& scores,
                                     std::size_t width, std::size_t height) {
  return make_region_mask(select_region(scores), width, height);
}

/// Pixel selector: the masked target region is pasted into the source
/// image. Inputs may be [H,W] or [C,H,W]; output pixels are bit-copies
/// of one input or the other, never blends.
inline Tensor mix_images(const Tensor& x_s, const Tensor& x_t,
                         const RegionMask& rm) {
  if (!x_s.same_dims(x_t))
    throw std::invalid_argument("mix_images: image dimension mismatch");
  const std::size_t rank = x_s.rank();
  if (rank != 2 && rank != 3)
    throw std::invalid_argument("mix_images: images must be rank 2 or 3");
  const std::size_t h = x_s.dim(rank - 2), w = x_s.dim(rank - 1);
  if (rm.mask.dim(0) != h || rm.mask.dim(1) != w)
    throw std::invalid_argument("mix_images: mask dimension mismatch");
  const std::size_t channels = (rank == 3) ? x_s.dim(0) : 1;
  Tensor out = x_s;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j)
        if (rm.mask.at(i, j) != 0.0)
          out.data()[(c * h + i) * w + j] = x_t.data()[(c * h + i) * w + j];
  return out;
}

namespace detail {

inline std::optional<Box> clip_inside(const Box& b, const Box& r) {
  const double x1 = std::max(b.x1, r.x1), y1 = std::max(b.y1, r.y1);
  const double x2 = std::min(b.x2, r.x2), y2 = std::min(b.y2, r.y2);
  if (x2 - x1 <= 0 || y2 - y1 <= 0) return std::nullopt;
  if ((x2 - x1) * (y2 - y1) < 1.0) return std::nullopt;
  return Box(x1, y1, x2, y2);
}

// Crop b so it no longer intersects the interior of r, staying
// rectangular: clip along one axis, keeping the largest-area result.
inline std::optional<Box> clip_outside(const Box& b, const Box& r) {
  const double ix = std::min(b.x2, r.x2) - std::max(b.x1, r.x1);
  const double iy = std::min(b.y2, r.y2) - std::max(b.y1, r.y1);
  if (ix <= 0 || iy <= 0) {
    if (b.area() < 1.0) return std::nullopt;
    return b;  // already outside
  }
  std::optional<Box> best;
  auto consider = [&](double x1, double y1, double x2, double y2) {
    if (x2 - x1 <= 0 || y2 - y1 <= 0) return;
    if ((x2 - x1) * (y2 - y1) < 1.0) return;
    if (!best || (x2 - x1) * (y2 - y1) > best->area())
      best = Box(x1, y1, x2, y2);
  };
  if (b.x2 > r.x2) consider(std::max(b.x1, r.x2), b.y1, b.x2, b.y2);
  if (b.x1 < r.x1) consider(b.x1, b.y1, std::min(b.x2, r.x1), b.y2);
  if (b.y2 > r.y2) consider(b.x1, std::max(b.y1, r.y2), b.x2, b.y2);
  if (b.y1 < r.y1) consider(b.x1, b.y1, b.x2, std::min(b.y2, r.y1));
  return best;
}

}  // namespace detail

/// Combined pseudo-labels: target labels clipped to the region
/// rectangle, source predictions clipped to its complement. Boxes
/// whose clipped area falls below 1 px^2 are dropped.
inline std::vector<Detection> merge_labels(
    const std::vector<Detection>& target_pls,
    const std::vector<Detection>& source_preds, const RegionMask& rm) {
  const Box region = rm.rect();
  std::vector<Detection> out;
  for (const Detection& d : target_pls) {
    if (auto clipped = detail::clip_inside(d.box, region)) {
      Detection nd = d;
      nd.box = *clipped;
      out.push_back(nd);
    }
  }
  for (const Detection& d : source_preds) {
    if (auto clipped = detail::clip_outside(d.box, region)) {
      Detection nd = d;
      nd.box = *clipped;
      out.push_back(nd);
    }
  }
  return out;
}

/// Mean of logistic(kappa * (c_i - c_th)); 0 for empty input.
inline double dynamic_alpha(const std::vector<double>& confs, double c_th,
                            double kappa) {
  if (confs.empty()) return 0.0;
  double s = 0.0;
  for (double c : confs) {
    if (!(c >= 0.0 && c <= 1.0))
      throw std::invalid_argument("dynamic_alpha: confidence outside [0,1]");
    s += core::logistic(kappa * (c - c_th));
  }
  return s / static_cast<double>(confs.size());
}

/// l_det + alpha * l_cons.
inline double total_loss(double l_det, double l_cons, double alpha) {
  if (l_det < 0.0 || l_cons < 0.0)
    throw std::invalid_argument("total_loss: losses must be >= 0");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("total_loss: alpha outside [0,1]");
  return l_det + alpha * l_cons;
}

}  // namespace simmemda::mixer
