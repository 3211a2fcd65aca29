#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "simmemda/core.hpp"
#include "simmemda/membank.hpp"

namespace simmemda::harness {

using core::Box;
using core::Detection;
using core::Tensor;

struct SynthParams {
  double ridge_amplitude = 4.0;
  double min_width = 1.5;
  double max_width = 3.0;
  double length_factor = 4.0;  // length >= factor * width
};

struct SynthScene {
  Tensor image;  // [H,W]
  std::vector<Detection> gts;
};

/// Deterministic synthetic SAR-like scene: unit-mean exponential
/// speckle plus oriented Gaussian ridges with their bounding boxes as
/// ground truth.
inline SynthScene synth_scene(std::uint64_t seed, std::size_t width,
                              std::size_t height, int n_wakes,
                              const SynthParams& params = {}) {
  if (width < 64 || height < 64)
    throw std::invalid_argument("synth_scene: size must be >= 64x64");
  std::mt19937_64 rng(seed);
  SynthScene scene;
  scene.image = Tensor::zeros({height, width});

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (double& v : scene.image.data()) {
    // inverse-CDF exponential, unit mean
    const double u = std::max(uni(rng), 1e-12);
    v = -std::log(u);
  }

  std::uniform_real_distribution<double> angle_dist(0.0, M_PI);
  std::uniform_real_distribution<double> width_dist(params.min_width,
                                                    params.max_width);
  for (int k = 0; k < n_wakes; ++k) {
    const double theta = angle_dist(rng);
    const double sigma_w = width_dist(rng);
    const double min_len = params.length_factor * 2.0 * sigma_w;
    const double max_len =
        std::max(min_len + 1.0, 0.4 * static_cast<double>(std::min(width, height)));
    std::uniform_real_distribution<double> len_dist(min_len, max_len);
    const double half_len = 0.5 * len_dist(rng);

    const double dx = std::cos(theta), dy = std::sin(theta);
    const double ext_x = std::abs(dx) * half_len + 3.0 * sigma_w;
    const double ext_y = std::abs(dy) * half_len + 3.0 * sigma_w;
    std::uniform_real_distribution<double> cx_dist(ext_x + 1.0,
                                                   static_cast<double>(width) - ext_x - 1.0);
    std::uniform_real_distribution<double> cy_dist(ext_y + 1.0,
                                                   static_cast<double>(height) - ext_y - 1.0);
    const double cx = cx_dist(rng), cy = cy_dist(rng);

    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double rx = static_cast<double>(j) - cx;
        const double ry = static_cast<double>(i) - cy;
        const double along = rx * dx + ry * dy;
        const double perp = -rx * dy + ry * dx;
        if (std::abs(along) > half_len) continue;
        scene.image.at(i, j) += params.ridge_amplitude *
                                std::exp(-perp * perp / (2.0 * sigma_w * sigma_w));
      }
    }
    scene.gts.emplace_back("synth", Box(cx - ext_x, cy - ext_y, cx + ext_x, cy + ext_y),
                           1.0, 0);
  }
  return scene;
}

/// Iterates the global-threshold EMA over a stream of per-epoch batch maxima and
/// returns tau_k for every step.
inline std::vector<double> simulate_threshold(
    const std::vector<std::vector<double>>& max_score_stream, double lambda,
    double tau0) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("simulate_threshold: lambda outside [0,1]");
  std::vector<double> trajectory;
  double tau = tau0;
  for (const auto& batch_maxima : max_score_stream) {
    tau = membank::global_threshold(tau, batch_maxima, lambda);
    trajectory.push_back(tau);
  }
  return trajectory;
}

}  // namespace simmemda::harness
