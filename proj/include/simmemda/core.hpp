#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace simmemda::core {

/// Dense row-major real tensor. Constructors reject NaN/Inf and
/// dims/data length mismatches.
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<std::size_t> dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {
    validate();
  }

  static Tensor zeros(std::vector<std::size_t> dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    return Tensor(std::move(dims), std::vector<double>(n, 0.0));
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return dims_.at(i); }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // rank-2 [H,W]
  double at(std::size_t i, std::size_t j) const {
    return data_[i * dims_[1] + j];
  }
  double& at(std::size_t i, std::size_t j) {
    return data_[i * dims_[1] + j];
  }
  // rank-3 [C,H,W]
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * dims_[1] + i) * dims_[2] + j];
  }

  bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

 private:
  void validate() const {
    std::size_t n = 1;
    for (std::size_t d : dims_) {
      if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
      n *= d;
    }
    if (n != data_.size())
      throw std::invalid_argument("Tensor: data length does not match dims");
    for (double v : data_)
      if (!std::isfinite(v))
        throw std::invalid_argument("Tensor: non-finite value");
  }

  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

/// Axis-aligned rectangle in pixel coordinates, x1 < x2 and y1 < y2.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Box() = default;
  Box(double x1_, double y1_, double x2_, double y2_)
      : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
          std::isfinite(y2)))
      throw std::invalid_argument("Box: non-finite coordinate");
    if (!(x1 < x2 && y1 < y2))
      throw std::invalid_argument("Box: requires x1 < x2 and y1 < y2");
  }

  double area() const { return (x2 - x1) * (y2 - y1); }
};

struct Detection {
  std::string image_id;
  Box box;
  double score = 0.0;
  int class_id = 0;

  Detection() = default;
  Detection(std::string image_id_, Box box_, double score_, int class_id_)
      : image_id(std::move(image_id_)),
        box(box_),
        score(score_),
        class_id(class_id_) {
    if (!(score >= 0.0 && score <= 1.0))
      throw std::invalid_argument("Detection: score outside [0,1]");
    if (class_id < 0)
      throw std::invalid_argument("Detection: negative class id");
  }
};

inline double iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

/// Bilinear sampling with zero padding outside the grid. Normalized
/// coordinates: (-1,-1) is the top-left pixel center, (+1,+1) the
/// bottom-right pixel center. Returns Tensor[C,N] for N points.
inline Tensor bilinear_sample(const Tensor& x,
                              const std::vector<std::pair<double, double>>& points) {
  if (x.rank() != 3)
    throw std::invalid_argument("bilinear_sample: tensor must be rank 3");
  const std::size_t c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t n = points.size();
  Tensor out = Tensor::zeros({c_n, std::max<std::size_t>(n, 1)});
  if (n == 0) return Tensor::zeros({c_n, 1});

  for (std::size_t p = 0; p < n; ++p) {
    const auto [nx, ny] = points[p];
    if (!std::isfinite(nx) || !std::isfinite(ny))
      throw std::invalid_argument("bilinear_sample: non-finite point");
    const double px = (nx + 1.0) * 0.5 * static_cast<double>(w - 1);
    const double py = (ny + 1.0) * 0.5 * static_cast<double>(h - 1);
    const long x0 = static_cast<long>(std::floor(px));
    const long y0 = static_cast<long>(std::floor(py));
    for (long dy = 0; dy <= 1; ++dy) {
      for (long dx = 0; dx <= 1; ++dx) {
        const long rx = x0 + dx, ry = y0 + dy;
        const double gw = std::max(0.0, 1.0 - std::abs(px - rx)) *
                          std::max(0.0, 1.0 - std::abs(py - ry));
        if (gw == 0.0) continue;
        if (rx < 0 || ry < 0 || rx >= static_cast<long>(w) ||
            ry >= static_cast<long>(h))
          continue;  // zero padding
        for (std::size_t c = 0; c < c_n; ++c)
          out.at(c, p) += gw * x.at(c, static_cast<std::size_t>(ry),
                                    static_cast<std::size_t>(rx));
      }
    }
  }
  return out;
}

/// Channel-wise soft-thresholding: sign(z) * max(|z| - tau_c, 0).
/// Channel is the leading dimension.
inline Tensor soft_threshold(const Tensor& z, const std::vector<double>& tau) {
  if (z.rank() < 1) throw std::invalid_argument("soft_threshold: empty tensor");
  const std::size_t channels = z.dim(0);
  if (tau.size() != channels)
    throw std::invalid_argument("soft_threshold: tau length != channel count");
  for (double t : tau)
    if (!(t >= 0.0)) throw std::invalid_argument("soft_threshold: negative tau");
  const std::size_t per_channel = z.size() / channels;
  Tensor out = z;
  for (std::size_t c = 0; c < channels; ++c) {
    const double t = tau[c];
    for (std::size_t k = 0; k < per_channel; ++k) {
      double& v = out[c * per_channel + k];
      const double m = std::max(std::abs(v) - t, 0.0);
      v = (v < 0.0 ? -m : m);
    }
  }
  return out;
}

/// Softmax weights exp(gamma*v_i)/sum_j exp(gamma*v_j), max-subtracted.
inline std::vector<double> softmax_weights(const std::vector<double>& v,
                                           double gamma) {
  if (v.empty()) throw std::invalid_argument("softmax_weights: empty vector");
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) {
    if (!std::isfinite(x))
      throw std::invalid_argument("softmax_weights: non-finite input");
    mx = std::max(mx, gamma * x);
  }
  std::vector<double> w(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::exp(gamma * v[i] - mx);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

/// Scaled dot-product attention: Softmax(Q K^T / sqrt(d)) V.
/// Q is [N,d], K and V are [M,d]; result is [N,d].
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k,
                                   const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
    throw std::invalid_argument("scaled_dot_attention: inputs must be rank 2");
  const std::size_t n = q.dim(0), d = q.dim(1), m = k.dim(0);
  if (k.dim(1) != d || v.dim(0) != m || v.dim(1) != d)
    throw std::invalid_argument("scaled_dot_attention: dimension mismatch");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out = Tensor::zeros({n, d});
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += q.at(i, t) * k.at(j, t);
      logits[j] = dot * scale;
    }
    const std::vector<double> w = softmax_weights(logits, 1.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < d; ++t) out.at(i, t) += w[j] * v.at(j, t);
  }
  return out;
}

inline double logistic(double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("logistic: non-finite z");
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace simmemda::core
