#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>
#include <stdexcept>
#include <string>
#include <vector>

#include "simmemda/core.hpp"
#include "simmemda/simfilter.hpp"

namespace simmemda::membank {

using core::Box;
using core::Detection;
using core::Tensor;

struct MemEntry {
  std::vector<double> feature;
  double confidence = 0.0;
  Box box;
  std::string image_id;
  int epoch = 0;
};

/// Ordered feature-confidence store with IoU-keyed replacement. Within
/// one image no two entries overlap with IoU > 0.5 after an update.
struct MemoryBank {
  std::vector<MemEntry> entries;
  std::size_t capacity = 2048;
};

struct CalibConfig {
  int k = 5;
  double gamma = 10.0;
  double delta = 0.7;
  double mu = 0.7;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  double beta = 0.5;
  double c_v = 0.0;  // 0 = auto (half the max window S)
  double lambda_ema = 0.9;
  double tau0 = 0.05;
  double eta_adj = 0.5;
  double momentum = 0.999;
  int geometry_window = 5;
  bool frangi_standard = false;
};

/// m * theta' + (1-m) * theta.
inline std::vector<double> momentum_update(const std::vector<double>& theta_prime,
                                           const std::vector<double>& theta,
                                           double m) {
  if (theta_prime.size() != theta.size())
    throw std::invalid_argument("momentum_update: dimension mismatch");
  if (!(m >= 0.0 && m < 1.0))
    throw std::invalid_argument("momentum_update: m outside [0,1)");
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i)
    out[i] = m * theta_prime[i] + (1.0 - m) * theta[i];
  return out;
}

/// Keep detections with score >= tau_k.
inline std::vector<Detection> prescreen(const std::vector<Detection>& dets,
                                        double tau_k) {
  if (!(tau_k >= 0.0 && tau_k <= 1.0))
    throw std::invalid_argument("prescreen: tau outside [0,1]");
  std::vector<Detection> out;
  for (const Detection& d : dets)
    if (d.score >= tau_k) out.push_back(d);
  return out;
}

/// IoU-keyed update: a new entry replaces the same-image record it
/// overlaps most when that IoU exceeds 0.5, otherwise it is appended.
/// Over capacity, oldest-epoch entries leave first (FIFO within epoch).
inline MemoryBank bank_update(MemoryBank bank, const std::vector<MemEntry>& fresh) {
  for (const MemEntry& e : fresh) {
    if (!bank.entries.empty() &&
        e.feature.size() != bank.entries[0].feature.size())
      throw std::invalid_argument("bank_update: feature dim mismatch");
    std::size_t best = bank.entries.size();
    double best_iou = 0.0;
    for (std::size_t i = 0; i < bank.entries.size(); ++i) {
      if (bank.entries[i].image_id != e.image_id) continue;
      const double v = core::iou(bank.entries[i].box, e.box);
      if (v > best_iou) {
        best_iou = v;
        best = i;
      }
    }
    if (best < bank.entries.size() && best_iou > 0.5)
      bank.entries[best] = e;
    else
      bank.entries.push_back(e);
  }
  while (bank.entries.size() > bank.capacity) {
    std::size_t victim = 0;
    for (std::size_t i = 1; i < bank.entries.size(); ++i)
      if (bank.entries[i].epoch < bank.entries[victim].epoch) victim = i;
    bank.entries.erase(bank.entries.begin() + static_cast<long>(victim));
  }
  return bank;
}

namespace detail {

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace detail

/// Top-K cosine neighbors (ties by ascending entry index) and
/// softmax voting weights at temperature gamma.
inline std::pair<std::vector<std::size_t>, std::vector<double>> knn_weights(
    const std::vector<double>& f_z, const MemoryBank& bank, int k, double gamma) {
  if (bank.entries.empty()) throw std::invalid_argument("knn_weights: empty bank");
  if (k < 1) throw std::invalid_argument("knn_weights: K < 1");
  std::vector<double> sims(bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    if (bank.entries[i].feature.size() != f_z.size())
      throw std::invalid_argument("knn_weights: feature dim mismatch");
    sims[i] = detail::cosine_similarity(f_z, bank.entries[i].feature);
  }
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                 order.size());
  std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<long>(keep));
  std::vector<double> sel(keep);
  for (std::size_t i = 0; i < keep; ++i) sel[i] = sims[idx[i]];
  return {std::move(idx), core::softmax_weights(sel, gamma)};
}

/// Weighted average of neighbor confidences.
inline double neighbor_conf(const std::vector<double>& weights,
                            const std::vector<double>& confs) {
  if (weights.size() != confs.size())
    throw std::invalid_argument("neighbor_conf: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * confs[i];
  return s;
}

/// delta * c_z + (1 - delta) * c_neighbor.
inline double fuse_conf(double c_z, double c_nb, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0))
    throw std::invalid_argument("fuse_conf: delta outside [0,1]");
  return delta * c_z + (1.0 - delta) * c_nb;
}

/// Structure tensor over the patch. Central differences in the interior,
/// one-sided at the borders.
inline std::array<double, 3> structure_tensor(const Tensor& patch) {
  if (patch.rank() != 2 || patch.dim(0) < 3 || patch.dim(1) < 3)
    throw std::invalid_argument("structure_tensor: patch must be >= 3x3");
  const std::size_t h = patch.dim(0), w = patch.dim(1);
  double jxx = 0.0, jxy = 0.0, jyy = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double gx, gy;
      if (j == 0)
        gx = patch.at(i, 1) - patch.at(i, 0);
      else if (j == w - 1)
        gx = patch.at(i, w - 1) - patch.at(i, w - 2);
      else
        gx = 0.5 * (patch.at(i, j + 1) - patch.at(i, j - 1));
      if (i == 0)
        gy = patch.at(1, j) - patch.at(0, j);
      else if (i == h - 1)
        gy = patch.at(h - 1, j) - patch.at(h - 2, j);
      else
        gy = 0.5 * (patch.at(i + 1, j) - patch.at(i - 1, j));
      jxx += gx * gx;
      jxy += gx * gy;
      jyy += gy * gy;
    }
  }
  return {jxx, jxy, jyy};
}

/// Eigenvalues of a symmetric 2x2 [[a,b],[b,c]], descending.
inline std::pair<double, double> eig2(const std::array<double, 3>& j) {
  const double tr = j[0] + j[2];
  const double det = j[0] * j[2] - j[1] * j[1];
  const double disc = std::sqrt(std::max(tr * tr / 4.0 - det, 0.0));
  return {tr / 2.0 + disc, tr / 2.0 - disc};
}

/// (l1 - l2)/(l1 + l2); 0 for a near-zero tensor.
inline double anisotropy(const std::array<double, 3>& j) {
  auto [l1, l2] = eig2(j);
  l2 = std::max(l2, 0.0);
  if (l1 + l2 < 1e-12) return 0.0;
  return (l1 - l2) / (l1 + l2);
}

/// (1 - exp(-R_B^2/2b^2)) * exp(-S^2/2c^2) with
/// R_B = |l2|/|l1|, S = sqrt(l1^2 + l2^2). The standard Frangi form
/// swaps the factor roles; it is available behind `standard_form`.
inline double vesselness(const std::array<double, 3>& j, double beta, double c_v,
                         bool standard_form = false) {
  if (!(beta > 0.0) || !(c_v > 0.0))
    throw std::invalid_argument("vesselness: beta and c_v must be positive");
  auto [l1, l2] = eig2(j);
  l2 = std::max(l2, 0.0);
  if (l1 < 1e-12) return 0.0;
  const double r_b = std::abs(l2) / std::abs(l1);
  const double s = std::sqrt(l1 * l1 + l2 * l2);
  const double fr = std::exp(-(r_b * r_b) / (2.0 * beta * beta));
  const double fs = std::exp(-(s * s) / (2.0 * c_v * c_v));
  return standard_form ? fr * (1.0 - fs) : (1.0 - fr) * fs;
}

/// c_g = gamma1 * mean anisotropy + gamma2 * mean vesselness
/// over all window positions inside the patch. c_v <= 0 auto-sets it
/// to half the maximum window S.
inline double geometry_factor(const Tensor& patch, int window, double gamma1,
                              double gamma2, double beta, double c_v = 0.0,
                              bool frangi_standard = false) {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("geometry_factor: window must be odd and >= 3");
  if (patch.rank() != 2 || patch.dim(0) < static_cast<std::size_t>(window) ||
      patch.dim(1) < static_cast<std::size_t>(window))
    throw std::invalid_argument("geometry_factor: patch smaller than window");
  const std::size_t h = patch.dim(0), w = patch.dim(1);
  const auto win = static_cast<std::size_t>(window);

  std::vector<std::array<double, 3>> tensors;
  double max_s = 0.0;
  for (std::size_t i = 0; i + win <= h; ++i) {
    for (std::size_t j = 0; j + win <= w; ++j) {
      Tensor sub = Tensor::zeros({win, win});
      for (std::size_t a = 0; a < win; ++a)
        for (std::size_t b = 0; b < win; ++b)
          sub.at(a, b) = patch.at(i + a, j + b);
      const auto st = structure_tensor(sub);
      tensors.push_back(st);
      auto [l1, l2] = eig2(st);
      l2 = std::max(l2, 0.0);
      max_s = std::max(max_s, std::sqrt(l1 * l1 + l2 * l2));
    }
  }
  const double c_eff = (c_v > 0.0) ? c_v : 0.5 * max_s;
  double c_bar = 0.0, v_bar = 0.0;
  for (const auto& st : tensors) {
    c_bar += anisotropy(st);
    v_bar += (c_eff > 0.0) ? vesselness(st, beta, c_eff, frangi_standard) : 0.0;
  }
  c_bar /= static_cast<double>(tensors.size());
  v_bar /= static_cast<double>(tensors.size());
  return gamma1 * c_bar + gamma2 * v_bar;
}

/// Mean anisotropy alone; used by the geometry
/// discrimination checks.
inline double mean_anisotropy(const Tensor& patch, int window) {
  return geometry_factor(patch, window, 1.0, 0.0, 0.5);
}

/// mu * c_f + (1 - mu) * logistic(c_g).
inline double refined_conf(double c_f, double c_g, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0))
    throw std::invalid_argument("refined_conf: mu outside [0,1]");
  if (!(c_f >= 0.0 && c_f <= 1.0))
    throw std::invalid_argument("refined_conf: c_f outside [0,1]");
  return mu * c_f + (1.0 - mu) * core::logistic(c_g);
}

/// EMA of per-batch maximum scores. Empty input keeps tau_prev.
inline double global_threshold(double tau_prev,
                               const std::vector<double>& batch_max_scores,
                               double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("global_threshold: lambda outside [0,1]");
  if (batch_max_scores.empty()) return tau_prev;
  double mean = 0.0;
  for (double s : batch_max_scores) mean += s;
  mean /= static_cast<double>(batch_max_scores.size());
  return lambda * tau_prev + (1.0 - lambda) * mean;
}

/// Mean absolute confidence gap to the neighbors; 0 when the
/// neighbor set is empty.
inline double dispersion(double c_i, const std::vector<double>& neighbor_confs) {
  if (neighbor_confs.empty()) return 0.0;
  double s = 0.0;
  for (double c : neighbor_confs) s += std::abs(c_i - c);
  return s / static_cast<double>(neighbor_confs.size());
}

/// tau_k + eta * Delta_i, clamped to [0,1].
inline double instance_threshold(double tau_k, double delta_i, double eta_adj) {
  if (eta_adj < 0.0)
    throw std::invalid_argument("instance_threshold: eta_adj must be >= 0");
  return std::clamp(tau_k + eta_adj * delta_i, 0.0, 1.0);
}

struct CalibResult {
  std::vector<Detection> accepted;
  std::size_t rejected_count = 0;
  MemoryBank bank;
};

namespace detail {

// Integer image rectangle under the box, expanded to at least the
// geometry window and clamped to the image.
inline std::array<std::size_t, 4> patch_rect(const Box& box, std::size_t h,
                                             std::size_t w, std::size_t win) {
  long x1 = static_cast<long>(std::floor(box.x1));
  long y1 = static_cast<long>(std::floor(box.y1));
  long x2 = static_cast<long>(std::ceil(box.x2));
  long y2 = static_cast<long>(std::ceil(box.y2));
  x1 = std::clamp<long>(x1, 0, static_cast<long>(w));
  x2 = std::clamp<long>(x2, 0, static_cast<long>(w));
  y1 = std::clamp<long>(y1, 0, static_cast<long>(h));
  y2 = std::clamp<long>(y2, 0, static_cast<long>(h));
  auto widen = [](long& a, long& b, long need, long lim) {
    while (b - a < need) {
      if (a > 0)
        --a;
      else if (b < lim)
        ++b;
      else
        break;
    }
  };
  widen(x1, x2, static_cast<long>(win), static_cast<long>(w));
  widen(y1, y2, static_cast<long>(win), static_cast<long>(h));
  return {static_cast<std::size_t>(y1), static_cast<std::size_t>(x1),
          static_cast<std::size_t>(y2), static_cast<std::size_t>(x2)};
}

}  // namespace detail

/// Full calibration pass: neighbor fusion,
/// geometry refinement, global-instance thresholding, bank update from
/// the accepted entries. The bank snapshot taken at entry is used for
/// every detection; updates apply atomically at the end.
inline CalibResult calibrate(const std::vector<Detection>& dets,
                             const Tensor& featmap, const Tensor& image,
                             const MemoryBank& bank, double tau_k,
                             const CalibConfig& cfg, int epoch = 0) {
  if (featmap.rank() != 3 || image.rank() != 2)
    throw std::invalid_argument("calibrate: featmap must be rank 3, image rank 2");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const std::pair<double, double> image_size{static_cast<double>(w),
                                             static_cast<double>(h)};
  CalibResult res;
  res.bank = bank;
  std::vector<MemEntry> fresh;

  for (const Detection& det : dets) {
    const std::vector<double> emb =
        simfilter::extract_embedding(featmap, det.box, image_size);
    double c_f = det.score;
    double delta_i = 0.0;
    if (!bank.entries.empty()) {
      const auto [idx, weights] = knn_weights(emb, bank, cfg.k, cfg.gamma);
      std::vector<double> confs(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        confs[i] = bank.entries[idx[i]].confidence;
      c_f = fuse_conf(det.score, neighbor_conf(weights, confs), cfg.delta);
      delta_i = dispersion(det.score, confs);
    }

    const auto win = static_cast<std::size_t>(cfg.geometry_window);
    const auto rect = detail::patch_rect(det.box, h, w, win);
    double c_g = 0.0;
    if (rect[2] - rect[0] >= win && rect[3] - rect[1] >= win) {
      Tensor patch = Tensor::zeros({rect[2] - rect[0], rect[3] - rect[1]});
      for (std::size_t i = rect[0]; i < rect[2]; ++i)
        for (std::size_t j = rect[1]; j < rect[3]; ++j)
          patch.at(i - rect[0], j - rect[1]) = image.at(i, j);
      c_g = geometry_factor(patch, cfg.geometry_window, cfg.gamma1, cfg.gamma2,
                            cfg.beta, cfg.c_v, cfg.frangi_standard);
    }

    const double c_prime = refined_conf(c_f, c_g, cfg.mu);
    const double tau_hat = instance_threshold(tau_k, delta_i, cfg.eta_adj);
    if (c_prime >= tau_hat) {
      Detection out = det;
      out.score = std::clamp(c_prime, 0.0, 1.0);
      res.accepted.push_back(out);
      fresh.push_back({emb, out.score, det.box, det.image_id, epoch});
    } else {
      ++res.rejected_count;
    }
  }
  res.bank = bank_update(std::move(res.bank), fresh);
  return res;
}

}  // namespace simmemda::membank
