#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "simmemda/membank.hpp"
#include "simmemda/spectral.hpp"

namespace simmemda::harness {

/// All pipeline hyperparameters with their defaults. Loaded from a
/// flat JSON document with dotted keys; unknown keys are errors.
struct PipelineConfig {
  spectral::ProfileConfig profile;
  double lambda_h = 1.0;
  double lambda_cyc = 10.0;

  membank::CalibConfig calib;

  double eta = 0.8;
  std::string scorer = "l2";  // l2 | kmeans | gmm
  int kmeans_k = 3;
  int kmeans_iters = 50;
  int gmm_m = 3;
  int gmm_iters = 100;
  double gmm_eps_floor = 1e-6;

  double nms_iou = 0.5;
  double nms_conf = 0.25;

  std::uint64_t seed = 0;

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig cfg;
    for (const auto& [key, value] : j.items()) {
      if (key == "spectral.n_radial") cfg.profile.n_radial = value.get<int>();
      else if (key == "spectral.n_angular") cfg.profile.n_angular = value.get<int>();
      else if (key == "spectral.rho_c") cfg.profile.rho_c = value.get<double>();
      else if (key == "spectral.lambda_h") cfg.lambda_h = value.get<double>();
      else if (key == "spectral.lambda_cyc") cfg.lambda_cyc = value.get<double>();
      else if (key == "calib.k") cfg.calib.k = value.get<int>();
      else if (key == "calib.gamma") cfg.calib.gamma = value.get<double>();
      else if (key == "calib.delta") cfg.calib.delta = value.get<double>();
      else if (key == "calib.mu") cfg.calib.mu = value.get<double>();
      else if (key == "calib.gamma1") cfg.calib.gamma1 = value.get<double>();
      else if (key == "calib.gamma2") cfg.calib.gamma2 = value.get<double>();
      else if (key == "calib.lambda") cfg.calib.lambda_ema = value.get<double>();
      else if (key == "calib.tau0") cfg.calib.tau0 = value.get<double>();
      else if (key == "calib.eta_adj") cfg.calib.eta_adj = value.get<double>();
      else if (key == "calib.momentum") cfg.calib.momentum = value.get<double>();
      else if (key == "geometry.beta") cfg.calib.beta = value.get<double>();
      else if (key == "geometry.c_v") cfg.calib.c_v = value.get<double>();
      else if (key == "geometry.window") cfg.calib.geometry_window = value.get<int>();
      else if (key == "geometry.frangi_standard")
        cfg.calib.frangi_standard = value.get<bool>();
      else if (key == "filter.eta") cfg.eta = value.get<double>();
      else if (key == "filter.scorer") cfg.scorer = value.get<std::string>();
      else if (key == "filter.kmeans_k") cfg.kmeans_k = value.get<int>();
      else if (key == "filter.kmeans_iters") cfg.kmeans_iters = value.get<int>();
      else if (key == "filter.gmm_m") cfg.gmm_m = value.get<int>();
      else if (key == "filter.gmm_iters") cfg.gmm_iters = value.get<int>();
      else if (key == "filter.gmm_eps_floor") cfg.gmm_eps_floor = value.get<double>();
      else if (key == "nms.iou") cfg.nms_iou = value.get<double>();
      else if (key == "nms.conf") cfg.nms_conf = value.get<double>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else throw std::invalid_argument("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
  }

  static PipelineConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  void validate() const {
    if (!(profile.rho_c > 0.0 && profile.rho_c < 1.0))
      throw std::invalid_argument("config: spectral.rho_c outside (0,1)");
    if (profile.n_radial < 1 || profile.n_angular < 1)
      throw std::invalid_argument("config: spectral bin counts must be >= 1");
    if (!(eta >= 0.0 && eta <= 1.0))
      throw std::invalid_argument("config: filter.eta outside [0,1]");
    if (scorer != "l2" && scorer != "kmeans" && scorer != "gmm")
      throw std::invalid_argument("config: filter.scorer must be l2|kmeans|gmm");
    if (!(calib.delta >= 0.0 && calib.delta <= 1.0))
      throw std::invalid_argument("config: calib.delta outside [0,1]");
    if (!(calib.mu >= 0.0 && calib.mu <= 1.0))
      throw std::invalid_argument("config: calib.mu outside [0,1]");
    if (!(calib.lambda_ema >= 0.0 && calib.lambda_ema <= 1.0))
      throw std::invalid_argument("config: calib.lambda outside [0,1]");
    if (!(calib.momentum >= 0.0 && calib.momentum < 1.0))
      throw std::invalid_argument("config: calib.momentum outside [0,1)");
    if (calib.k < 1) throw std::invalid_argument("config: calib.k must be >= 1");
    if (calib.geometry_window < 3 || calib.geometry_window % 2 == 0)
      throw std::invalid_argument("config: geometry.window must be odd and >= 3");
  }
};

}  // namespace simmemda::harness
