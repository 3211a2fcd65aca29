#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "simmemda/simfilter.hpp"

using namespace simmemda;
using core::Box;
using core::Tensor;
using simfilter::Vec;

TEST_CASE("extract_embedding basic cases") {
  // constant map
  const Tensor fm({3, 4, 4}, std::vector<double>(48, 2.5));
  Vec e = simfilter::extract_embedding(fm, Box(1, 1, 3, 3), {4.0, 4.0});
  for (double v : e) CHECK(v == doctest::Approx(2.5));

  // whole-image box -> global per-channel mean
  std::vector<double> d(2 * 2 * 2);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i);
  const Tensor fm2({2, 2, 2}, d);
  e = simfilter::extract_embedding(fm2, Box(0, 0, 10, 10), {10.0, 10.0});
  CHECK(e[0] == doctest::Approx((0 + 1 + 2 + 3) / 4.0));
  CHECK(e[1] == doctest::Approx((4 + 5 + 6 + 7) / 4.0));

  // 1-channel 2x2 [[1,2],[3,4]], left column -> mean{1,3} = 2
  const Tensor fm3({1, 2, 2}, {1, 2, 3, 4});
  e = simfilter::extract_embedding(fm3, Box(0, 0, 1, 2), {2.0, 2.0});
  CHECK(e[0] == doctest::Approx(2.0));

  CHECK_THROWS_AS(simfilter::extract_embedding(fm3, Box(5, 5, 6, 6), {2.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("extract_embedding ignores values outside the crop") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> d(1 * 6 * 6);
  for (auto& v : d) v = u(rng);
  Tensor fm({1, 6, 6}, d);
  const Box box(2, 2, 4, 4);
  const Vec before = simfilter::extract_embedding(fm, box, {6.0, 6.0});
  // perturb cells outside the crop
  fm.at(0, 0, 0) = 100.0;
  fm.at(0, 5, 5) = -100.0;
  const Vec after = simfilter::extract_embedding(fm, box, {6.0, 6.0});
  CHECK(before[0] == doctest::Approx(after[0]).epsilon(1e-15));
}

TEST_CASE("extract_embedding tiny-box center fallback") {
  const Tensor fm({1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
  // sub-cell box around (2.1, 1.1) in a 4x4 image with 4x4 featmap:
  // no cell center inside -> the cell containing the box center
  const Vec e = simfilter::extract_embedding(fm, Box(2.05, 1.05, 2.15, 1.15),
                                             {4.0, 4.0});
  CHECK(e[0] == doctest::Approx(fm.at(0, 1, 2)));
}

TEST_CASE("fit_prototype") {
  CHECK_THROWS_AS(simfilter::fit_prototype({}), std::invalid_argument);
  const Vec single{1.0, 2.0};
  CHECK(simfilter::fit_prototype({single}) == single);
  const auto p = simfilter::fit_prototype({{0, 0}, {2, 2}});
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p[1] == doctest::Approx(1.0));
  CHECK(simfilter::fit_prototype({{2, 2}, {0, 0}}) == p);
}

TEST_CASE("l2_distance") {
  CHECK(simfilter::l2_distance({1, 2}, {1, 2}) == 0.0);
  CHECK(simfilter::l2_distance({0, 0}, {3, 4}) == doctest::Approx(25.0));
  CHECK(simfilter::l2_distance({0, 0}, {6, 8}) == doctest::Approx(100.0));
  CHECK_THROWS_AS(simfilter::l2_distance({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("fit_kmeans") {
  // K = 1 -> prototype
  const std::vector<Vec> embs = {{0, 0}, {1, 1}, {2, 5}, {4, 1}};
  const auto c1 = simfilter::fit_kmeans(embs, 1, 10, 42);
  const auto proto = simfilter::fit_prototype(embs);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(c1[0][i] == doctest::Approx(proto[i]).epsilon(1e-12));

  // two well-separated blobs
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<Vec> blobs;
  Vec mean_a{0, 0}, mean_b{0, 0};
  for (int i = 0; i < 6; ++i) {
    blobs.push_back({n(rng), n(rng)});
    blobs.push_back({10.0 + n(rng), 10.0 + n(rng)});
  }
  for (std::size_t i = 0; i < blobs.size(); i += 2) {
    mean_a[0] += blobs[i][0] / 6.0;
    mean_a[1] += blobs[i][1] / 6.0;
    mean_b[0] += blobs[i + 1][0] / 6.0;
    mean_b[1] += blobs[i + 1][1] / 6.0;
  }
  const auto c2 = simfilter::fit_kmeans(blobs, 2, 50, 123);
  // match centers to blob means by proximity
  for (const Vec& m : {mean_a, mean_b}) {
    const double d = std::min(simfilter::l2_distance(c2[0], m),
                              simfilter::l2_distance(c2[1], m));
    CHECK(d < 1e-6);
  }

  // determinism
  CHECK(simfilter::fit_kmeans(blobs, 2, 50, 123) == c2);

  CHECK_THROWS_AS(simfilter::fit_kmeans(embs, 5, 10, 0), std::invalid_argument);
}

TEST_CASE("fit_kmeans iters = 0 returns the initialization") {
  const std::vector<Vec> embs = {{0, 0}, {5, 5}, {9, 9}};
  const auto init = simfilter::fit_kmeans(embs, 2, 0, 7);
  // every center is one of the input points (k-means++ picks points)
  for (const Vec& c : init) {
    bool found = false;
    for (const Vec& e : embs) found = found || (e == c);
    CHECK(found);
  }
}

TEST_CASE("kmeans_distance") {
  const std::vector<Vec> centers = {{0, 0}, {10, 0}};
  CHECK(simfilter::kmeans_distance({0, 0}, centers) == 0.0);
  CHECK(simfilter::kmeans_distance({1, 0}, centers) == doctest::Approx(1.0));
  CHECK(simfilter::kmeans_distance({3, 4}, {{0, 0}}) ==
        doctest::Approx(simfilter::l2_distance({3, 4}, {0, 0})));
  CHECK_THROWS_AS(simfilter::kmeans_distance({1, 1}, {}), std::invalid_argument);
}

TEST_CASE("fit_gmm single component is the closed-form Gaussian MLE") {
  const std::vector<Vec> embs = {{1, 2}, {3, 4}, {5, 0}, {1, 1}};
  const auto gmm = simfilter::fit_gmm(embs, 1, 20, 1e-6, 5);
  REQUIRE(gmm.components.size() == 1);
  CHECK(gmm.components[0].weight == doctest::Approx(1.0));
  const auto proto = simfilter::fit_prototype(embs);
  CHECK(gmm.components[0].mean[0] == doctest::Approx(proto[0]).epsilon(1e-9));
  CHECK(gmm.components[0].mean[1] == doctest::Approx(proto[1]).epsilon(1e-9));
  // sample covariance (MLE, 1/N)
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2, 2);
  for (const Vec& e : embs) {
    Eigen::Vector2d diff(e[0] - proto[0], e[1] - proto[1]);
    cov += diff * diff.transpose();
  }
  cov /= 4.0;
  CHECK((gmm.components[0].cov - cov).norm() < 1e-9);
}

TEST_CASE("fit_gmm floors degenerate covariance") {
  const std::vector<Vec> embs(5, Vec{1.0, 1.0});
  const auto gmm = simfilter::fit_gmm(embs, 1, 5, 1e-6, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gmm.components[0].cov);
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(es.eigenvalues()[i] >= 1e-6 - 1e-15);
  CHECK(std::isfinite(simfilter::gmm_distance({1.0, 1.0}, gmm)));
}

TEST_CASE("fit_gmm log-likelihood is non-decreasing") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<Vec> embs;
    const std::size_t dim = 2 + rep % 3;
    for (int i = 0; i < 60; ++i) {
      Vec e(dim);
      const double off = (i % 2 == 0) ? 0.0 : 4.0;
      for (auto& v : e) v = off + n(rng);
      embs.push_back(e);
    }
    const auto gmm = simfilter::fit_gmm(embs, 2, 30, 1e-6, rep);
    for (std::size_t it = 1; it < gmm.log_likelihoods.size(); ++it) {
      const bool floored_prev =
          std::find(gmm.floored_iterations.begin(), gmm.floored_iterations.end(),
                    static_cast<int>(it) - 1) != gmm.floored_iterations.end();
      if (!floored_prev)
        CHECK(gmm.log_likelihoods[it] >= gmm.log_likelihoods[it - 1] - 1e-8);
    }
  }
}

TEST_CASE("gmm_distance closed forms") {
  // M=1, emb = mu, Sigma = I -> 1 / (2pi)^(-d/2)
  simfilter::GmmModel gmm;
  gmm.components.push_back({1.0, Eigen::Vector2d(1.0, 2.0),
                            Eigen::Matrix2d::Identity()});
  const double d = simfilter::gmm_distance({1.0, 2.0}, gmm);
  CHECK(d == doctest::Approx(2.0 * M_PI).epsilon(1e-12));

  // distance grows with displacement from the mean
  CHECK(simfilter::gmm_distance({2.0, 2.0}, gmm) > d);
  CHECK(simfilter::gmm_distance({4.0, 2.0}, gmm) >
        simfilter::gmm_distance({2.0, 2.0}, gmm));

  // duplicated equal components behave like one
  simfilter::GmmModel gmm2;
  gmm2.components.push_back({0.5, Eigen::Vector2d(1.0, 2.0),
                             Eigen::Matrix2d::Identity()});
  gmm2.components.push_back({0.5, Eigen::Vector2d(1.0, 2.0),
                             Eigen::Matrix2d::Identity()});
  CHECK(simfilter::gmm_distance({0.3, 0.7}, gmm2) ==
        doctest::Approx(simfilter::gmm_distance({0.3, 0.7}, gmm)).epsilon(1e-12));

  // far-away point clamps instead of overflowing
  CHECK(simfilter::gmm_distance({1e6, 1e6}, gmm) == 1e300);

  CHECK_THROWS_AS(simfilter::gmm_distance({1.0}, gmm), std::invalid_argument);
}

TEST_CASE("select_similar") {
  std::vector<simfilter::ScoredInstance> scored;
  const std::vector<double> dists = {3.0, 1.0, 2.0};
  for (int i = 0; i < 3; ++i) scored.push_back({i, {}, dists[static_cast<std::size_t>(i)]});

  CHECK(simfilter::select_similar(scored, 1.0).size() == 3);
  CHECK(simfilter::select_similar(scored, 0.0).empty());
  const auto sel = simfilter::select_similar(scored, 2.0 / 3.0);
  REQUIRE(sel.size() == 2);
  CHECK(sel[0] == 1);
  CHECK(sel[1] == 2);

  // ties break by ascending index
  std::vector<simfilter::ScoredInstance> tied = {{2, {}, 5.0}, {0, {}, 5.0}, {1, {}, 5.0}};
  const auto ts = simfilter::select_similar(tied, 2.0 / 3.0);
  REQUIRE(ts.size() == 2);
  CHECK(ts[0] == 0);
  CHECK(ts[1] == 1);

  CHECK_THROWS_AS(simfilter::select_similar(scored, 1.5), std::invalid_argument);
}

TEST_CASE("select_similar size is exactly floor(eta*N)") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<simfilter::ScoredInstance> scored;
    const int n = 1 + static_cast<int>(u(rng) * 20);
    for (int i = 0; i < n; ++i) scored.push_back({i, {}, u(rng)});
    const double eta = u(rng);
    CHECK(simfilter::select_similar(scored, eta).size() ==
          static_cast<std::size_t>(std::floor(eta * n)));
  }
}

TEST_CASE("pca2_project") {
  // collinear points -> second coordinate ~ 0
  std::vector<Vec> line;
  for (int i = 0; i < 8; ++i)
    line.push_back({static_cast<double>(i), 2.0 * i, -1.0 * i});
  auto proj = simfilter::pca2_project(line);
  for (const auto& p : proj) CHECK(std::abs(p.second) < 1e-9);

  // 2D data: pairwise distances preserved
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  std::vector<Vec> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({u(rng), u(rng)});
  proj = simfilter::pca2_project(pts);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double orig = simfilter::l2_distance(pts[i], pts[j]);
      const double dx = proj[i].first - proj[j].first;
      const double dy = proj[i].second - proj[j].second;
      CHECK(dx * dx + dy * dy == doctest::Approx(orig).epsilon(1e-9));
    }

  // leading coordinate carries at least as much variance
  std::vector<Vec> pts3;
  for (int i = 0; i < 20; ++i) pts3.push_back({u(rng), u(rng), u(rng)});
  proj = simfilter::pca2_project(pts3);
  double v1 = 0.0, v2 = 0.0, m1 = 0.0, m2 = 0.0;
  for (const auto& p : proj) {
    m1 += p.first / proj.size();
    m2 += p.second / proj.size();
  }
  for (const auto& p : proj) {
    v1 += (p.first - m1) * (p.first - m1);
    v2 += (p.second - m2) * (p.second - m2);
  }
  CHECK(v1 >= v2 - 1e-9);

  CHECK_THROWS_AS(simfilter::pca2_project({{1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("density_overlap") {
  const std::vector<std::pair<double, double>> a = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  CHECK(simfilter::density_overlap(a, a, 4) == doctest::Approx(1.0));

  const std::vector<std::pair<double, double>> far = {{100, 100}, {101, 101}};
  CHECK(simfilter::density_overlap(a, far, 4) == doctest::Approx(0.0));

  // hand-computed 2x2 grid: a has cells (3/4, 1/4, 0, 0); b (1/4, 1/4, 1/4, 1/4)
  const std::vector<std::pair<double, double>> ha = {{0, 0}, {1, 0}, {2, 0}, {5, 0}};
  const std::vector<std::pair<double, double>> hb = {{0, 0}, {5, 0}, {0, 5}, {5, 5}};
  // union bbox [0,5]x[0,5]; a cells: left-bottom x3, right-bottom x1
  const double expected = std::min(0.75, 0.25) + std::min(0.25, 0.25);
  CHECK(simfilter::density_overlap(ha, hb, 2) == doctest::Approx(expected));

  // symmetry and affine invariance
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::pair<double, double>> ra, rb;
  for (int i = 0; i < 30; ++i) {
    ra.emplace_back(u(rng), u(rng));
    rb.emplace_back(u(rng) + 0.5, u(rng) - 0.2);
  }
  const double fwd = simfilter::density_overlap(ra, rb, 8);
  CHECK(simfilter::density_overlap(rb, ra, 8) == doctest::Approx(fwd).epsilon(1e-12));
  auto scale = [](std::vector<std::pair<double, double>> pts) {
    for (auto& p : pts) {
      p.first = 3.0 * p.first + 7.0;
      p.second = 3.0 * p.second - 2.0;
    }
    return pts;
  };
  CHECK(simfilter::density_overlap(scale(ra), scale(rb), 8) ==
        doctest::Approx(fwd).epsilon(1e-12));
}
