#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "simmemda/core.hpp"

namespace simmemda::simfilter {

using core::Box;
using core::Tensor;

using Vec = std::vector<double>;

/// Gaussian mixture with covariance eigenvalues floored at eps_floor.
struct GmmModel {
  struct Component {
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
  };
  std::vector<Component> components;
  std::vector<double> log_likelihoods;  // one per EM iteration
  std::vector<int> floored_iterations;  // iterations where flooring fired
};

struct ScoredInstance {
  int index = 0;
  Vec embedding;
  double distance = 0.0;
};

/// Instance embedding: rescale the box to feature-map
/// coordinates, take all cells whose centers fall inside it (center
/// cell fallback when none do), per-channel mean.
inline Vec extract_embedding(const Tensor& featmap, const Box& box,
                             std::pair<double, double> image_size) {
  if (featmap.rank() != 3)
    throw std::invalid_argument("extract_embedding: feature map must be rank 3");
  const auto [img_w, img_h] = image_size;
  if (!(img_w > 0 && img_h > 0))
    throw std::invalid_argument("extract_embedding: bad image size");
  if (box.x2 <= 0 || box.y2 <= 0 || box.x1 >= img_w || box.y1 >= img_h)
    throw std::invalid_argument("extract_embedding: box outside image");
  const std::size_t c = featmap.dim(0), hf = featmap.dim(1), wf = featmap.dim(2);
  const double sx = static_cast<double>(wf) / img_w;
  const double sy = static_cast<double>(hf) / img_h;
  const double bx1 = box.x1 * sx, bx2 = box.x2 * sx;
  const double by1 = box.y1 * sy, by2 = box.y2 * sy;

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < hf; ++i) {
    const double cy = static_cast<double>(i) + 0.5;
    if (cy < by1 || cy >= by2) continue;
    for (std::size_t j = 0; j < wf; ++j) {
      const double cx = static_cast<double>(j) + 0.5;
      if (cx >= bx1 && cx < bx2) cells.emplace_back(i, j);
    }
  }
  if (cells.empty()) {
    // center-cell fallback
    const double mx = std::clamp(0.5 * (bx1 + bx2), 0.0, static_cast<double>(wf) - 1e-9);
    const double my = std::clamp(0.5 * (by1 + by2), 0.0, static_cast<double>(hf) - 1e-9);
    cells.emplace_back(static_cast<std::size_t>(my), static_cast<std::size_t>(mx));
  }
  Vec emb(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (const auto& [i, j] : cells) acc += featmap.at(ch, i, j);
    emb[ch] = acc / static_cast<double>(cells.size());
  }
  return emb;
}

inline Vec fit_prototype(const std::vector<Vec>& embs) {
  if (embs.empty()) throw std::invalid_argument("fit_prototype: empty input");
  Vec proto(embs[0].size(), 0.0);
  for (const Vec& e : embs) {
    if (e.size() != proto.size())
      throw std::invalid_argument("fit_prototype: inconsistent dims");
    for (std::size_t i = 0; i < e.size(); ++i) proto[i] += e[i];
  }
  for (double& v : proto) v /= static_cast<double>(embs.size());
  return proto;
}

inline double l2_distance(const Vec& emb, const Vec& proto) {
  if (emb.size() != proto.size())
    throw std::invalid_argument("l2_distance: dimension mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double t = emb[i] - proto[i];
    d += t * t;
  }
  return d;
}

namespace detail {

inline std::size_t nearest_center(const Vec& p, const std::vector<Vec>& centers) {
  std::size_t best = 0;
  double best_d = l2_distance(p, centers[0]);
  for (std::size_t i = 1; i < centers.size(); ++i) {
    const double d = l2_distance(p, centers[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd iterations from a k-means++ seeded start; deterministic given
/// seed. Empty clusters are re-seeded to the farthest point.
inline std::vector<Vec> fit_kmeans(const std::vector<Vec>& embs, int k,
                                   int iters, std::uint64_t seed) {
  if (k < 1 || static_cast<std::size_t>(k) > embs.size())
    throw std::invalid_argument("fit_kmeans: need 1 <= K <= |embs|");
  std::mt19937_64 rng(seed);
  const std::size_t n = embs.size();

  // k-means++ init
  std::vector<Vec> centers;
  centers.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centers.push_back(embs[first(rng)]);
  std::vector<double> d2(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = l2_distance(embs[i], centers[detail::nearest_center(embs[i], centers)]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r <= acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.push_back(embs[pick]);
  }

  std::vector<std::size_t> assign(n);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      assign[i] = detail::nearest_center(embs[i], centers);
    std::vector<Vec> sums(centers.size(), Vec(embs[0].size(), 0.0));
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < embs[i].size(); ++t)
        sums[assign[i]][t] += embs[i][t];
      ++counts[assign[i]];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) {
        // re-seed to the point farthest from its assigned center
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = l2_distance(embs[i], centers[assign[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[ci] = embs[far];
      } else {
        for (std::size_t t = 0; t < sums[ci].size(); ++t)
          centers[ci][t] = sums[ci][t] / static_cast<double>(counts[ci]);
      }
    }
  }
  return centers;
}

/// Squared distance to the nearest cluster center.
inline double kmeans_distance(const Vec& emb, const std::vector<Vec>& centers) {
  if (centers.empty()) throw std::invalid_argument("kmeans_distance: no centers");
  double best = l2_distance(emb, centers[0]);
  for (std::size_t i = 1; i < centers.size(); ++i)
    best = std::min(best, l2_distance(emb, centers[i]));
  return best;
}

namespace detail {

inline void floor_covariance(Eigen::MatrixXd& cov, double eps_floor,
                             bool* floored) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  Eigen::VectorXd ev = es.eigenvalues();
  bool fired = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < eps_floor) {
      ev[i] = eps_floor;
      fired = true;
    }
  }
  if (fired)
    cov = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  if (floored) *floored = fired;
}

// log N(x; mu, cov) via Cholesky of the (floored, hence SPD) covariance.
inline double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& cov) {
  const Eigen::Index d = x.size();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
  const Eigen::VectorXd z = llt.matrixL().solve(x - mu);
  return -0.5 * (static_cast<double>(d) * std::log(2.0 * M_PI) + log_det +
                 z.squaredNorm());
}

inline double logsumexp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace detail

/// EM from a K-means start, full covariances with per-M-step
/// eigenvalue flooring. Log-likelihood per iteration is recorded in
/// the returned model.
inline GmmModel fit_gmm(const std::vector<Vec>& embs, int m, int iters,
                        double eps_floor, std::uint64_t seed) {
  if (m < 1 || static_cast<std::size_t>(m) > embs.size())
    throw std::invalid_argument("fit_gmm: need 1 <= M <= |embs|");
  if (!(eps_floor > 0.0))
    throw std::invalid_argument("fit_gmm: eps_floor must be positive");
  const std::size_t n = embs.size();
  const Eigen::Index d = static_cast<Eigen::Index>(embs[0].size());

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = embs[i][static_cast<std::size_t>(j)];

  // init from k-means assignment
  const std::vector<Vec> centers = fit_kmeans(embs, m, 20, seed);
  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i)
    assign[i] = detail::nearest_center(embs[i], centers);

  GmmModel model;
  model.components.resize(static_cast<std::size_t>(m));
  for (int c = 0; c < m; ++c) {
    auto& comp = model.components[static_cast<std::size_t>(c)];
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (assign[i] == static_cast<std::size_t>(c)) members.push_back(i);
    comp.weight = std::max(members.size() / static_cast<double>(n), 1e-8);
    comp.mean = Eigen::VectorXd::Zero(d);
    if (!members.empty()) {
      for (std::size_t i : members) comp.mean += x.row(static_cast<Eigen::Index>(i)).transpose();
      comp.mean /= static_cast<double>(members.size());
    } else {
      comp.mean = x.row(0).transpose();
    }
    comp.cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i : members) {
      const Eigen::VectorXd diff = x.row(static_cast<Eigen::Index>(i)).transpose() - comp.mean;
      comp.cov += diff * diff.transpose();
    }
    if (members.size() > 1) comp.cov /= static_cast<double>(members.size());
    detail::floor_covariance(comp.cov, eps_floor, nullptr);
  }
  // renormalize weights
  {
    double ws = 0.0;
    for (const auto& comp : model.components) ws += comp.weight;
    for (auto& comp : model.components) comp.weight /= ws;
  }

  Eigen::MatrixXd resp(n, m);
  std::vector<double> lj(static_cast<std::size_t>(m));
  for (int it = 0; it < iters; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd xi = x.row(static_cast<Eigen::Index>(i)).transpose();
      for (int c = 0; c < m; ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(c)];
        lj[static_cast<std::size_t>(c)] =
            std::log(comp.weight) + detail::log_gauss(xi, comp.mean, comp.cov);
      }
      const double lse = detail::logsumexp(lj);
      ll += lse;
      for (int c = 0; c < m; ++c)
        resp(static_cast<Eigen::Index>(i), c) =
            std::exp(lj[static_cast<std::size_t>(c)] - lse);
    }
    model.log_likelihoods.push_back(ll);

    // M-step
    bool any_floored = false;
    for (int c = 0; c < m; ++c) {
      auto& comp = model.components[static_cast<std::size_t>(c)];
      const double nk = resp.col(c).sum();
      comp.weight = nk / static_cast<double>(n);
      if (nk < 1e-12) continue;  // keep previous parameters, weight ~ 0
      comp.mean = (resp.col(c).transpose() * x).transpose() / nk;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd diff = x.row(static_cast<Eigen::Index>(i)).transpose() - comp.mean;
        cov += resp(static_cast<Eigen::Index>(i), c) * diff * diff.transpose();
      }
      comp.cov = cov / nk;
      bool fired = false;
      detail::floor_covariance(comp.cov, eps_floor, &fired);
      any_floored = any_floored || fired;
    }
    if (any_floored) model.floored_iterations.push_back(it);
  }
  return model;
}

/// Reciprocal of the mixture density, computed in log space.
/// Densities below 1e-300 clamp the distance at 1e300.
inline double gmm_distance(const Vec& emb, const GmmModel& gmm) {
  if (gmm.components.empty())
    throw std::invalid_argument("gmm_distance: empty model");
  const Eigen::Index d = gmm.components[0].mean.size();
  if (static_cast<Eigen::Index>(emb.size()) != d)
    throw std::invalid_argument("gmm_distance: dimension mismatch");
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = emb[static_cast<std::size_t>(i)];
  std::vector<double> lj;
  lj.reserve(gmm.components.size());
  for (const auto& comp : gmm.components)
    lj.push_back(std::log(std::max(comp.weight, 1e-300)) +
                 detail::log_gauss(x, comp.mean, comp.cov));
  const double log_density = detail::logsumexp(lj);
  if (log_density < std::log(1e-300)) return 1e300;
  return std::exp(-log_density);
}

/// Ascending sort by distance (ties by original index), keep the first
/// floor(eta * N).
inline std::vector<int> select_similar(const std::vector<ScoredInstance>& scored,
                                       double eta) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("select_similar: eta outside [0,1]");
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scored[a].distance != scored[b].distance)
      return scored[a].distance < scored[b].distance;
    return scored[a].index < scored[b].index;
  });
  const auto keep = static_cast<std::size_t>(
      std::floor(eta * static_cast<double>(scored.size())));
  std::vector<int> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[order[i]].index);
  return out;
}

/// Projection onto the two leading covariance eigenvectors, sign-fixed
/// so each eigenvector's largest-magnitude coordinate is positive.
inline std::vector<std::pair<double, double>> pca2_project(
    const std::vector<Vec>& embs) {
  if (embs.size() < 2)
    throw std::invalid_argument("pca2_project: need at least 2 points");
  const Eigen::Index d = static_cast<Eigen::Index>(embs[0].size());
  if (d < 2) throw std::invalid_argument("pca2_project: need dim >= 2");
  const auto n = static_cast<Eigen::Index>(embs.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      x(i, j) = embs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascending; take the last two, descending
  std::vector<std::pair<double, double>> out(static_cast<std::size_t>(n));
  for (int axis = 0; axis < 2; ++axis) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - axis);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (axis == 0)
        out[static_cast<std::size_t>(i)].first = proj[i];
      else
        out[static_cast<std::size_t>(i)].second = proj[i];
    }
  }
  return out;
}

/// Histogram overlap sum(min(p, q)) over a shared grid_n x grid_n grid
/// spanning the union bounding box.
inline double density_overlap(const std::vector<std::pair<double, double>>& a,
                              const std::vector<std::pair<double, double>>& b,
                              int grid_n) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("density_overlap: empty point set");
  if (grid_n < 1) throw std::invalid_argument("density_overlap: grid_n < 1");
  double x0 = a[0].first, x1 = a[0].first, y0 = a[0].second, y1 = a[0].second;
  auto grow = [&](const std::pair<double, double>& p) {
    x0 = std::min(x0, p.first);
    x1 = std::max(x1, p.first);
    y0 = std::min(y0, p.second);
    y1 = std::max(y1, p.second);
  };
  for (const auto& p : a) grow(p);
  for (const auto& p : b) grow(p);
  const double wx = std::max(x1 - x0, 1e-300);
  const double wy = std::max(y1 - y0, 1e-300);
  const auto g = static_cast<std::size_t>(grid_n);
  auto hist = [&](const std::vector<std::pair<double, double>>& pts) {
    std::vector<double> hgram(g * g, 0.0);
    for (const auto& p : pts) {
      auto cx = static_cast<std::size_t>((p.first - x0) / wx * grid_n);
      auto cy = static_cast<std::size_t>((p.second - y0) / wy * grid_n);
      cx = std::min(cx, g - 1);
      cy = std::min(cy, g - 1);
      hgram[cy * g + cx] += 1.0;
    }
    for (double& v : hgram) v /= static_cast<double>(pts.size());
    return hgram;
  };
  const std::vector<double> pa = hist(a), pb = hist(b);
  double overlap = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    overlap += std::min(pa[i], pb[i]);
  return overlap;
}

}  // namespace simmemda::simfilter
