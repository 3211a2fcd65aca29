#pragma once

#include <complex>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "simmemda/core.hpp"

namespace simmemda::spectral {

using core::Tensor;

/// Low-band radial / high-band angular energy histograms of a 2D
/// spectrum (see polar_profiles).
struct SpectralProfile {
  std::vector<double> p_low;   // radial bins, r in [0, rho_c)
  std::vector<double> p_high;  // angular bins (mod pi), r >= rho_c
};

struct ProfileConfig {
  int n_radial = 16;
  int n_angular = 16;
  double rho_c = 0.25;
};

namespace detail {

// Row-column DFT, unitary (1/sqrt(HW)). Naive O(n^2) per line is fine
// at desk scale.
inline std::vector<std::complex<double>> dft2(const Tensor& img) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  std::vector<std::complex<double>> rows(h * w), out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t u = 0; u < w; ++u) {
      std::complex<double> acc(0.0, 0.0);
      for (std::size_t j = 0; j < w; ++j) {
        const double ang = -2.0 * M_PI * static_cast<double>(u * j) /
                           static_cast<double>(w);
        acc += img.at(i, j) * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      rows[i * w + u] = acc;
    }
  }
  for (std::size_t u = 0; u < w; ++u) {
    for (std::size_t v = 0; v < h; ++v) {
      std::complex<double> acc(0.0, 0.0);
      for (std::size_t i = 0; i < h; ++i) {
        const double ang = -2.0 * M_PI * static_cast<double>(v * i) /
                           static_cast<double>(h);
        acc += rows[i * w + u] *
               std::complex<double>(std::cos(ang), std::sin(ang));
      }
      out[v * w + u] = acc;
    }
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& z : out) z *= norm;
  return out;
}

}  // namespace detail

/// Magnitude of the unitary 2D DFT with the DC bin shifted to
/// (floor(H/2), floor(W/2)).
inline Tensor fft2_centered_magnitude(const Tensor& img) {
  if (img.rank() != 2 || img.dim(0) < 2 || img.dim(1) < 2)
    throw std::invalid_argument("fft2_centered_magnitude: need rank-2, H,W >= 2");
  const std::size_t h = img.dim(0), w = img.dim(1);
  const auto spec = detail::dft2(img);
  Tensor out = Tensor::zeros({h, w});
  const std::size_t cy = h / 2, cx = w / 2;
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u)
      out.at((v + cy) % h, (u + cx) % w) = std::abs(spec[v * w + u]);
  return out;
}

/// Bins squared spectrum magnitude by normalized radius and angle.
/// Every spectrum bin lands in exactly one histogram, so the summed
/// histogram energy equals the total spectrum energy.
inline SpectralProfile polar_profiles(const Tensor& img, int n_radial,
                                      int n_angular, double rho_c) {
  if (img.rank() != 2 || img.dim(0) < 2 || img.dim(1) < 2)
    throw std::invalid_argument("polar_profiles: need rank-2, H,W >= 2");
  if (n_radial <= 0 || n_angular <= 0 || !(rho_c > 0.0 && rho_c < 1.0))
    throw std::invalid_argument("polar_profiles: bad binning parameters");
  const Tensor mag = fft2_centered_magnitude(img);
  const std::size_t h = img.dim(0), w = img.dim(1);
  const double cy = static_cast<double>(h / 2);
  const double cx = static_cast<double>(w / 2);
  double r_max = 0.0;
  for (std::size_t v = 0; v < h; ++v)
    for (std::size_t u = 0; u < w; ++u)
      r_max = std::max(r_max, std::hypot(static_cast<double>(v) - cy,
                                         static_cast<double>(u) - cx));
  SpectralProfile prof;
  prof.p_low.assign(static_cast<std::size_t>(n_radial), 0.0);
  prof.p_high.assign(static_cast<std::size_t>(n_angular), 0.0);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      const double dy = static_cast<double>(v) - cy;
      const double dx = static_cast<double>(u) - cx;
      const double r = (r_max > 0.0) ? std::hypot(dy, dx) / r_max : 0.0;
      const double e = mag.at(v, u) * mag.at(v, u);
      if (r < rho_c) {
        auto bin = static_cast<std::size_t>(r / rho_c * n_radial);
        if (bin >= prof.p_low.size()) bin = prof.p_low.size() - 1;
        prof.p_low[bin] += e;
      } else {
        double theta = std::atan2(dy, dx);
        theta = std::fmod(theta + 2.0 * M_PI, M_PI);  // fold mod pi
        auto bin = static_cast<std::size_t>(theta / M_PI * n_angular);
        if (bin >= prof.p_high.size()) bin = prof.p_high.size() - 1;
        prof.p_high[bin] += e;
      }
    }
  }
  return prof;
}

inline SpectralProfile polar_profiles(const Tensor& img,
                                      const ProfileConfig& cfg) {
  return polar_profiles(img, cfg.n_radial, cfg.n_angular, cfg.rho_c);
}

/// Directional cosine distance 1 - u.v/(|u||v|); 0 when either vector
/// is all-zero.
inline double dir_cos_distance(const std::vector<double>& u,
                               const std::vector<double>& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("dir_cos_distance: length mismatch");
  if (u == v) return 0.0;
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

/// Spectral preservation loss for one image pair:
/// |p_L(x)-p_L(y)|^2 + lambda_H * d_H(p_H(x), p_H(y)).
inline double spl(const Tensor& x, const Tensor& y, double lambda_h,
                  const ProfileConfig& cfg = {}) {
  if (!x.same_dims(y)) throw std::invalid_argument("spl: dimension mismatch");
  const SpectralProfile px = polar_profiles(x, cfg);
  const SpectralProfile py = polar_profiles(y, cfg);
  double l2 = 0.0;
  for (std::size_t i = 0; i < px.p_low.size(); ++i) {
    const double d = px.p_low[i] - py.p_low[i];
    l2 += d * d;
  }
  return l2 + lambda_h * dir_cos_distance(px.p_high, py.p_high);
}

/// Cyclic spectral consistency loss: SPL terms on both round trips.
inline double cscl(const Tensor& x_s, const Tensor& x_s_cyc, const Tensor& x_t,
                   const Tensor& x_t_cyc, double lambda_h,
                   const ProfileConfig& cfg = {}) {
  if (!x_s.same_dims(x_s_cyc) || !x_t.same_dims(x_t_cyc))
    throw std::invalid_argument("cscl: dimension mismatch");
  return spl(x_s, x_s_cyc, lambda_h, cfg) + spl(x_t, x_t_cyc, lambda_h, cfg);
}

inline double cycle_l1(const Tensor& x, const Tensor& x_cyc) {
  if (!x.same_dims(x_cyc))
    throw std::invalid_argument("cycle_l1: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - x_cyc[i]);
  return s / static_cast<double>(x.size());
}

/// Least-squares adversarial losses from supplied discriminator scores.
inline std::pair<double, double> lsgan_losses(
    const std::vector<double>& scores_real,
    const std::vector<double>& scores_fake) {
  if (scores_real.empty() || scores_fake.empty())
    throw std::invalid_argument("lsgan_losses: empty score vector");
  double gen = 0.0, disc_real = 0.0, disc_fake = 0.0;
  for (double s : scores_fake) {
    gen += (s - 1.0) * (s - 1.0);
    disc_fake += s * s;
  }
  for (double s : scores_real) disc_real += (s - 1.0) * (s - 1.0);
  gen /= static_cast<double>(scores_fake.size());
  disc_fake /= static_cast<double>(scores_fake.size());
  disc_real /= static_cast<double>(scores_real.size());
  return {gen, disc_real + disc_fake};
}

/// Total style-transfer objective assembled from its scalar components.
inline double wakegan_total(double spl_s, double spl_t, double gan_st,
                            double gan_ts, double cscl_v, double cyc,
                            double lambda_cyc) {
  return spl_s + spl_t + gan_st + gan_ts + cscl_v + lambda_cyc * cyc;
}

/// Learnable parameters of the frequency selection unit. One depthwise
/// 3x3 kernel per channel, one Cg x Cg mixing matrix, one batch-norm
/// scale/shift pair per group.
struct FsuWeights {
  std::size_t groups = 1;
  std::size_t kernel_size = 3;  // k, odd
  std::vector<Tensor> depthwise;              // per group: [Cg,3,3]
  std::vector<Tensor> pointwise;              // per group: [Cg,Cg]
  std::vector<std::pair<double, double>> bn;  // per group: scale, shift
};

namespace detail {

inline double sigmoid(double z) { return core::logistic(z); }

// Same-size zero-padded 2D convolution of one channel with a k x k
// kernel (cross-correlation; the kernels are learned, orientation is
// immaterial).
inline void conv2_same(const Tensor& src, std::size_t ch,
                       const std::vector<double>& kernel, std::size_t k,
                       Tensor& dst, std::size_t dst_ch) {
  const std::size_t h = src.dim(1), w = src.dim(2);
  const long r = static_cast<long>(k) / 2;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (long di = -r; di <= r; ++di) {
        for (long dj = -r; dj <= r; ++dj) {
          const long si = static_cast<long>(i) + di;
          const long sj = static_cast<long>(j) + dj;
          if (si < 0 || sj < 0 || si >= static_cast<long>(h) ||
              sj >= static_cast<long>(w))
            continue;
          acc += kernel[static_cast<std::size_t>(di + r) * k +
                        static_cast<std::size_t>(dj + r)] *
                 src.at(ch, static_cast<std::size_t>(si),
                        static_cast<std::size_t>(sj));
        }
      }
      dst.at(dst_ch, i, j) = acc;
    }
  }
}

// Adaptive average pooling of an H x W plane to k x k.
inline std::vector<double> adaptive_pool(const std::vector<double>& plane,
                                         std::size_t h, std::size_t w,
                                         std::size_t k) {
  std::vector<double> out(k * k, 0.0);
  for (std::size_t bi = 0; bi < k; ++bi) {
    const std::size_t i0 = bi * h / k;
    const std::size_t i1 = (bi + 1) * h / k + (((bi + 1) * h) % k ? 1 : 0);
    for (std::size_t bj = 0; bj < k; ++bj) {
      const std::size_t j0 = bj * w / k;
      const std::size_t j1 = (bj + 1) * w / k + (((bj + 1) * w) % k ? 1 : 0);
      double acc = 0.0;
      for (std::size_t i = i0; i < std::max(i1, i0 + 1) && i < h; ++i)
        for (std::size_t j = j0; j < std::max(j1, j0 + 1) && j < w; ++j)
          acc += plane[i * w + j];
      const std::size_t cnt =
          (std::min(std::max(i1, i0 + 1), h) - i0) *
          (std::min(std::max(j1, j0 + 1), w) - j0);
      out[bi * k + bj] = acc / static_cast<double>(cnt);
    }
  }
  return out;
}

}  // namespace detail

/// Per-group low-pass kernel used by fsu_decompose; k x k, entries >= 0,
/// sums to 1.
inline std::vector<double> fsu_lowpass_kernel(const Tensor& f,
                                              const FsuWeights& w,
                                              std::size_t group) {
  const std::size_t c = f.dim(0), h = f.dim(1), wd = f.dim(2);
  const std::size_t cg = c / w.groups;
  const std::size_t k = w.kernel_size;
  const std::size_t c0 = group * cg;

  // depthwise 3x3 conv + sigmoid -> weight prototype
  Tensor z_hat = Tensor::zeros({cg, h, wd});
  const Tensor& dw = w.depthwise[group];
  for (std::size_t cc = 0; cc < cg; ++cc) {
    std::vector<double> kern(9);
    for (std::size_t t = 0; t < 9; ++t) kern[t] = dw.data()[cc * 9 + t];
    Tensor tmp = Tensor::zeros({1, h, wd});
    // view group channel c0+cc of f
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wd; ++j) tmp.at(0, i, j) = f.at(c0 + cc, i, j);
    Tensor conv = Tensor::zeros({1, h, wd});
    detail::conv2_same(tmp, 0, kern, 3, conv, 0);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wd; ++j)
        z_hat.at(cc, i, j) = detail::sigmoid(conv.at(0, i, j));
  }

  // channel-mix via 1x1 conv, sigmoid, elementwise product
  Tensor z_tilde = Tensor::zeros({cg, h, wd});
  const Tensor& pw = w.pointwise[group];
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < wd; ++j) {
      for (std::size_t co = 0; co < cg; ++co) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cg; ++ci)
          acc += pw.at(co, ci) * z_hat.at(ci, i, j);
        z_tilde.at(co, i, j) = z_hat.at(co, i, j) * detail::sigmoid(acc);
      }
    }
  }

  // batch norm over the group's extent, channel average,
  // adaptive pool to k x k, softmax over the k^2 entries.
  double mean = 0.0;
  for (double v : z_tilde.data()) mean += v;
  mean /= static_cast<double>(z_tilde.size());
  double var = 0.0;
  for (double v : z_tilde.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(z_tilde.size());
  const auto [scale, shift] = w.bn[group];
  const double inv_std = 1.0 / std::sqrt(var + 1e-5);

  std::vector<double> plane(h * wd, 0.0);
  for (std::size_t cc = 0; cc < cg; ++cc)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < wd; ++j)
        plane[i * wd + j] +=
            (scale * (z_tilde.at(cc, i, j) - mean) * inv_std + shift) /
            static_cast<double>(cg);

  std::vector<double> pooled = detail::adaptive_pool(plane, h, wd, k);
  return core::softmax_weights(pooled, 1.0);
}

/// Convolution stage with precomputed per-group low-pass
/// kernels: F_l = W_LP * F, F_h = (I_k - W_LP) * F with I_k the center
/// delta, so F_l + F_h == F. Linear in F.
inline std::pair<Tensor, Tensor> fsu_apply(
    const Tensor& f, const std::vector<std::vector<double>>& lowpass_kernels,
    std::size_t kernel_size) {
  const std::size_t groups = lowpass_kernels.size();
  if (f.rank() != 3) throw std::invalid_argument("fsu_apply: need rank-3 F");
  if (groups == 0 || f.dim(0) % groups != 0)
    throw std::invalid_argument("fsu_apply: group count must divide channels");
  const std::size_t c = f.dim(0), h = f.dim(1), wd = f.dim(2);
  const std::size_t cg = c / groups;
  const std::size_t k = kernel_size;
  Tensor f_l = Tensor::zeros({c, h, wd});
  Tensor f_h = Tensor::zeros({c, h, wd});
  for (std::size_t g = 0; g < groups; ++g) {
    const std::vector<double>& w_lp = lowpass_kernels[g];
    if (w_lp.size() != k * k)
      throw std::invalid_argument("fsu_apply: kernel size mismatch");
    std::vector<double> w_hp(k * k);
    for (std::size_t t = 0; t < k * k; ++t) w_hp[t] = -w_lp[t];
    w_hp[(k / 2) * k + (k / 2)] += 1.0;  // I_k - W_LP
    for (std::size_t cc = 0; cc < cg; ++cc) {
      const std::size_t ch = g * cg + cc;
      detail::conv2_same(f, ch, w_lp, k, f_l, ch);
      detail::conv2_same(f, ch, w_hp, k, f_h, ch);
    }
  }
  return {std::move(f_l), std::move(f_h)};
}

/// FSU decomposition: derive one adaptive low-pass kernel
/// per group from F, then split F into complementary bands.
inline std::pair<Tensor, Tensor> fsu_decompose(const Tensor& f,
                                               const FsuWeights& w) {
  if (f.rank() != 3) throw std::invalid_argument("fsu_decompose: need rank-3 F");
  if (w.groups == 0 || f.dim(0) % w.groups != 0)
    throw std::invalid_argument("fsu_decompose: group count must divide channels");
  if (w.kernel_size % 2 == 0)
    throw std::invalid_argument("fsu_decompose: kernel size must be odd");
  if (w.depthwise.size() != w.groups || w.pointwise.size() != w.groups ||
      w.bn.size() != w.groups)
    throw std::invalid_argument("fsu_decompose: weight group count mismatch");
  std::vector<std::vector<double>> kernels;
  kernels.reserve(w.groups);
  for (std::size_t g = 0; g < w.groups; ++g)
    kernels.push_back(fsu_lowpass_kernel(f, w, g));
  return fsu_apply(f, kernels, w.kernel_size);
}

}  // namespace simmemda::spectral
