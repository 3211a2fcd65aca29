// Command-line front end: file-based access to the filtering,
// calibration, mixing, spectral, evaluation, synthesis, and
// threshold-simulation operations.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "simmemda/simmemda.hpp"

namespace {

using json = nlohmann::json;
using namespace simmemda;

constexpr int kExitUsage = 1;
constexpr int kExitMalformed = 2;
constexpr int kExitInvariant = 3;

harness::PipelineConfig load_config(const std::string& path, std::uint64_t seed,
                                    bool seed_set) {
  harness::PipelineConfig cfg;
  if (!path.empty()) cfg = harness::PipelineConfig::from_file(path);
  if (seed_set) cfg.seed = seed;
  return cfg;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

int run_filter(const harness::PipelineConfig& cfg, const std::string& target_path,
               const std::string& source_path, const std::string& out_path,
               double eta) {
  const auto target = io::read_embeddings(target_path);
  const auto source = io::read_embeddings(source_path);
  if (target.empty()) {
    std::cerr << "filter: target embedding set is empty\n";
    return kExitInvariant;
  }

  std::vector<double> distances(source.size());
  if (cfg.scorer == "l2") {
    const auto proto = simfilter::fit_prototype(target);
    for (std::size_t i = 0; i < source.size(); ++i)
      distances[i] = simfilter::l2_distance(source[i], proto);
  } else if (cfg.scorer == "kmeans") {
    const auto centers = simfilter::fit_kmeans(
        target, std::min<int>(cfg.kmeans_k, static_cast<int>(target.size())),
        cfg.kmeans_iters, cfg.seed);
    for (std::size_t i = 0; i < source.size(); ++i)
      distances[i] = simfilter::kmeans_distance(source[i], centers);
  } else {
    const auto gmm = simfilter::fit_gmm(
        target, std::min<int>(cfg.gmm_m, static_cast<int>(target.size())),
        cfg.gmm_iters, cfg.gmm_eps_floor, cfg.seed);
    for (std::size_t i = 0; i < source.size(); ++i)
      distances[i] = simfilter::gmm_distance(source[i], gmm);
  }

  std::vector<simfilter::ScoredInstance> scored(source.size());
  for (std::size_t i = 0; i < source.size(); ++i)
    scored[i] = {static_cast<int>(i), source[i], distances[i]};
  const std::vector<int> selected = simfilter::select_similar(scored, eta);

  json out = json::array();
  for (int idx : selected)
    out.push_back({{"index", idx},
                   {"distance", distances[static_cast<std::size_t>(idx)]}});
  write_json(out_path, out);
  return 0;
}

int run_calibrate(const harness::PipelineConfig& cfg, const std::string& dets_path,
                  const std::string& featmap_path, const std::string& image_path,
                  const std::string& bank_in, const std::string& out_dets,
                  const std::string& out_bank, double tau_k, int epoch) {
  const auto dets = io::read_detections(dets_path);
  const core::Tensor featmap = io::read_tensor(featmap_path);
  const core::Tensor image = io::read_tensor(image_path);
  membank::MemoryBank bank;
  bank.capacity = 2048;
  if (!bank_in.empty()) bank = io::read_bank(bank_in, bank.capacity);

  const auto screened = membank::prescreen(dets, tau_k);
  const auto result =
      membank::calibrate(screened, featmap, image, bank, tau_k, cfg.calib, epoch);
  io::write_detections(out_dets, result.accepted);
  if (!out_bank.empty()) io::write_bank(out_bank, result.bank);
  std::cout << "accepted " << result.accepted.size() << ", rejected "
            << result.rejected_count << "\n";
  return 0;
}

int run_mix(const std::string& source_path, const std::string& target_path,
            const std::string& target_labels_path,
            const std::string& source_preds_path, const std::string& out_image,
            const std::string& manifest_path, double c_th, double kappa) {
  const core::Tensor x_s = io::read_tensor(source_path);
  const core::Tensor x_t = io::read_tensor(target_path);
  const auto target_pls = io::read_detections(target_labels_path);
  std::vector<core::Detection> source_preds;
  if (!source_preds_path.empty())
    source_preds = io::read_detections(source_preds_path);

  const std::size_t rank = x_t.rank();
  if (rank != 2 && rank != 3) {
    std::cerr << "mix: images must be rank 2 or 3\n";
    return kExitInvariant;
  }
  const std::size_t h = x_t.dim(rank - 2), w = x_t.dim(rank - 1);
  const auto scores = mixer::quadrant_confidences(
      target_pls, {static_cast<double>(w), static_cast<double>(h)});
  const mixer::RegionMask rm = mixer::select_region_mask(scores, w, h);
  const core::Tensor mixed = mixer::mix_images(x_s, x_t, rm);
  const auto merged = mixer::merge_labels(target_pls, source_preds, rm);

  std::vector<double> confs;
  for (const auto& d : merged) confs.push_back(d.score);
  const double alpha = mixer::dynamic_alpha(confs, c_th, kappa);

  io::write_tensor(out_image, mixed);
  json labels = json::array();
  for (const auto& d : merged) labels.push_back(io::detection_to_json(d));
  json record = {{"source_image", source_path}, {"target_image", target_path},
                 {"region_id", rm.region_id},   {"alpha", alpha},
                 {"merged_labels", labels}};
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot open '" + manifest_path + "'");
  out << record.dump() << '\n';
  return 0;
}

int run_eval(const std::string& preds_path, const std::string& gts_path,
             const std::string& out_path) {
  const auto preds = io::read_detections(preds_path);
  const auto gts = io::read_detections(gts_path);
  const harness::EvalReport rep = harness::eval_detections(preds, gts);
  json curves = json::array();
  for (const auto& c : rep.pr_curves)
    curves.push_back({{"class_id", c.class_id},
                      {"iou_threshold", c.iou_threshold},
                      {"precision", c.precision},
                      {"recall", c.recall}});
  write_json(out_path, {{"ap_per_threshold", rep.ap_per_threshold},
                        {"map50", rep.map50},
                        {"map5095", rep.map5095},
                        {"pr_curves", curves}});
  return 0;
}

int run_spectral(const harness::PipelineConfig& cfg, const std::string& a_path,
                 const std::string& b_path, const std::string& a_cyc_path,
                 const std::string& b_cyc_path, const std::string& out_path) {
  const core::Tensor a = io::read_tensor(a_path);
  const core::Tensor b = io::read_tensor(b_path);
  const auto pa = spectral::polar_profiles(a, cfg.profile);
  const auto pb = spectral::polar_profiles(b, cfg.profile);
  json out = {{"spl", spectral::spl(a, b, cfg.lambda_h, cfg.profile)},
              {"profile_a", {{"p_low", pa.p_low}, {"p_high", pa.p_high}}},
              {"profile_b", {{"p_low", pb.p_low}, {"p_high", pb.p_high}}}};
  if (!a_cyc_path.empty() && !b_cyc_path.empty()) {
    const core::Tensor ac = io::read_tensor(a_cyc_path);
    const core::Tensor bc = io::read_tensor(b_cyc_path);
    out["cscl"] = spectral::cscl(a, ac, b, bc, cfg.lambda_h, cfg.profile);
    out["cycle_l1"] =
        spectral::cycle_l1(a, ac) + spectral::cycle_l1(b, bc);
  }
  write_json(out_path, out);
  return 0;
}

int run_synth(std::uint64_t seed, std::size_t width, std::size_t height,
              int n_wakes, const std::string& out_image,
              const std::string& out_gts) {
  const harness::SynthScene scene =
      harness::synth_scene(seed, width, height, n_wakes);
  io::write_tensor(out_image, scene.image);
  io::write_detections(out_gts, scene.gts);
  return 0;
}

int run_simulate(const std::string& stream_path, double lambda, double tau0,
                 const std::string& out_path) {
  std::ifstream in(stream_path);
  if (!in)
    throw io::ParseError("cannot open '" + stream_path + "'", 0);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw io::ParseError(std::string("bad stream JSON: ") + e.what(), 0);
  }
  std::vector<std::vector<double>> stream;
  for (const auto& epoch : j) stream.push_back(epoch.get<std::vector<double>>());
  const auto trajectory = harness::simulate_threshold(stream, lambda, tau0);
  write_json(out_path, {{"tau", trajectory}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SimMemDA pipeline numerics"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "pipeline config JSON")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed");

  // filter
  auto* filter = app.add_subcommand("filter", "similarity-guided source filtering");
  std::string f_target, f_source, f_out;
  double f_eta = -1.0;
  filter->add_option("--target-emb", f_target, "target embeddings (EMB1)")->required();
  filter->add_option("--source-emb", f_source, "source embeddings (EMB1)")->required();
  filter->add_option("--out", f_out, "selection JSON output")->required();
  filter->add_option("--eta", f_eta, "selection fraction (overrides config)");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "pseudo-label calibration");
  std::string c_dets, c_featmap, c_image, c_bank, c_out_dets, c_out_bank;
  double c_tau = -1.0;
  int c_epoch = 0;
  calib->add_option("--dets", c_dets, "detections JSONL")->required();
  calib->add_option("--featmap", c_featmap, "feature map TEN1")->required();
  calib->add_option("--image", c_image, "image TEN1")->required();
  calib->add_option("--bank", c_bank, "memory bank MBK1 (input)");
  calib->add_option("--out-dets", c_out_dets, "accepted detections JSONL")->required();
  calib->add_option("--out-bank", c_out_bank, "updated bank MBK1");
  calib->add_option("--tau", c_tau, "global threshold (default tau0)");
  calib->add_option("--epoch", c_epoch, "epoch stamp for bank entries");
  double c_k = -1, c_gamma = -1e30, c_delta = -1, c_mu = -1, c_tau0 = -1,
         c_lambda = -1, c_eta_adj = -1, c_momentum = -1;
  calib->add_option("--k", c_k, "neighbor count K");
  calib->add_option("--gamma", c_gamma, "softmax temperature");
  calib->add_option("--delta", c_delta, "confidence fusion coefficient");
  calib->add_option("--mu", c_mu, "geometry/neighbor mix");
  calib->add_option("--tau0", c_tau0, "initial threshold");
  calib->add_option("--lambda", c_lambda, "EMA decay");
  calib->add_option("--eta-adj", c_eta_adj, "dispersion coefficient");
  calib->add_option("--momentum", c_momentum, "momentum coefficient");

  // mix
  auto* mix = app.add_subcommand("mix", "confidence-driven region mixing");
  std::string m_source, m_target, m_tlabels, m_spreds, m_out_image, m_manifest;
  double m_cth = 0.5, m_kappa = 10.0;
  mix->add_option("--source", m_source, "source image TEN1")->required();
  mix->add_option("--target", m_target, "target image TEN1")->required();
  mix->add_option("--target-labels", m_tlabels, "target pseudo-labels JSONL")->required();
  mix->add_option("--source-preds", m_spreds, "source predictions JSONL");
  mix->add_option("--out-image", m_out_image, "mixed image TEN1")->required();
  mix->add_option("--manifest", m_manifest, "manifest JSONL output")->required();
  mix->add_option("--c-th", m_cth, "alpha confidence threshold");
  mix->add_option("--kappa", m_kappa, "alpha scaling factor");

  // eval
  auto* ev = app.add_subcommand("eval", "detection mAP evaluation");
  std::string e_preds, e_gts, e_out;
  ev->add_option("--preds", e_preds, "predictions JSONL")->required();
  ev->add_option("--gts", e_gts, "ground truth JSONL")->required();
  ev->add_option("--out", e_out, "EvalReport JSON output")->required();

  // spectral
  auto* spec = app.add_subcommand("spectral", "SPL/CSCL and spectral profiles");
  std::string s_a, s_b, s_ac, s_bc, s_out;
  spec->add_option("--a", s_a, "first image TEN1")->required();
  spec->add_option("--b", s_b, "second image TEN1")->required();
  spec->add_option("--a-cyc", s_ac, "first round-trip image TEN1");
  spec->add_option("--b-cyc", s_bc, "second round-trip image TEN1");
  spec->add_option("--out", s_out, "report JSON output")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "seeded synthetic scenes");
  std::size_t sy_w = 128, sy_h = 128;
  int sy_n = 2;
  std::string sy_image, sy_gts;
  synth->add_option("--width", sy_w, "image width");
  synth->add_option("--height", sy_h, "image height");
  synth->add_option("--n-wakes", sy_n, "number of wakes");
  synth->add_option("--out-image", sy_image, "image TEN1 output")->required();
  synth->add_option("--out-gts", sy_gts, "ground truth JSONL output")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate", "threshold EMA trajectory");
  std::string si_stream, si_out;
  double si_lambda = -1.0, si_tau0 = -1.0;
  sim->add_option("--stream", si_stream, "JSON list of per-epoch batch maxima")->required();
  sim->add_option("--lambda", si_lambda, "EMA decay (overrides config)");
  sim->add_option("--tau0", si_tau0, "initial threshold (overrides config)");
  sim->add_option("--out", si_out, "trajectory JSON output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    harness::PipelineConfig cfg =
        load_config(config_path, seed, seed_opt->count() > 0);
    if (filter->parsed())
      return run_filter(cfg, f_target, f_source, f_out,
                        f_eta >= 0.0 ? f_eta : cfg.eta);
    if (calib->parsed()) {
      if (c_k > 0) cfg.calib.k = static_cast<int>(c_k);
      if (c_gamma > -1e29) cfg.calib.gamma = c_gamma;
      if (c_delta >= 0) cfg.calib.delta = c_delta;
      if (c_mu >= 0) cfg.calib.mu = c_mu;
      if (c_tau0 >= 0) cfg.calib.tau0 = c_tau0;
      if (c_lambda >= 0) cfg.calib.lambda_ema = c_lambda;
      if (c_eta_adj >= 0) cfg.calib.eta_adj = c_eta_adj;
      if (c_momentum >= 0) cfg.calib.momentum = c_momentum;
      return run_calibrate(cfg, c_dets, c_featmap, c_image, c_bank, c_out_dets,
                           c_out_bank, c_tau >= 0.0 ? c_tau : cfg.calib.tau0,
                           c_epoch);
    }
    if (mix->parsed())
      return run_mix(m_source, m_target, m_tlabels, m_spreds, m_out_image,
                     m_manifest, m_cth, m_kappa);
    if (ev->parsed()) return run_eval(e_preds, e_gts, e_out);
    if (spec->parsed()) return run_spectral(cfg, s_a, s_b, s_ac, s_bc, s_out);
    if (synth->parsed())
      return run_synth(cfg.seed, sy_w, sy_h, sy_n, sy_image, sy_gts);
    if (sim->parsed())
      return run_simulate(si_stream,
                          si_lambda >= 0.0 ? si_lambda : cfg.calib.lambda_ema,
                          si_tau0 >= 0.0 ? si_tau0 : cfg.calib.tau0, si_out);
  } catch (const io::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMalformed;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMalformed;
  }
  return kExitUsage;
}
