#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "simmemda/config.hpp"
#include "simmemda/eval.hpp"
#include "simmemda/io.hpp"
#include "simmemda/synth.hpp"

using namespace simmemda;
using core::Box;
using core::Detection;
using core::Tensor;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("simmemda_test_" + name))
      .string();
}

Detection det(const std::string& img, Box b, double s, int cls = 0) {
  return {img, b, s, cls};
}

// per-definition AP recomputation, structured differently from the
// library: builds the full match table first, then integrates the
// envelope from raw counts
double oracle_ap(std::vector<Detection> preds, const std::vector<Detection>& gts,
                 double thr) {
  if (gts.empty()) return preds.empty() ? 1.0 : 0.0;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.score > b.score;
                   });
  std::vector<bool> used(gts.size(), false);
  std::vector<int> is_tp;
  for (const Detection& p : preds) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].image_id != p.image_id) continue;
      const double v = core::iou(p.box, gts[g].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      is_tp.push_back(1);
    } else {
      is_tp.push_back(0);
    }
  }
  double ap = 0.0;
  // for each rank where a TP occurs, effective precision is the max
  // raw precision at that rank or later (envelope)
  const std::size_t n = is_tp.size();
  std::vector<double> prec(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += is_tp[i];
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  for (std::size_t i = 0; i < n; ++i)
    if (is_tp[i]) ap += prec[i] / static_cast<double>(gts.size());
  return ap;
}

}  // namespace

TEST_CASE("eval_detections hand-walked examples") {
  const std::vector<Detection> gts = {det("a", Box(0, 0, 10, 10), 1.0),
                                      det("a", Box(20, 20, 30, 30), 1.0)};

  // perfect predictions -> AP 1 at every threshold
  const std::vector<Detection> perfect = {det("a", Box(0, 0, 10, 10), 0.9),
                                          det("a", Box(20, 20, 30, 30), 0.8)};
  auto rep = harness::eval_detections(perfect, gts);
  CHECK(rep.map50 == doctest::Approx(1.0));
  CHECK(rep.map5095 == doctest::Approx(1.0));
  REQUIRE(rep.iou_thresholds.size() == 10);
  CHECK(rep.iou_thresholds[0] == doctest::Approx(0.5));
  CHECK(rep.iou_thresholds[9] == doctest::Approx(0.95));

  // one hit then one miss: P/R walk (1, 0.5) -> (0.5, 0.5), AP = 0.5
  const std::vector<Detection> half = {det("a", Box(0, 0, 10, 10), 0.9),
                                       det("a", Box(50, 50, 60, 60), 0.8)};
  rep = harness::eval_detections(half, gts, {0.5});
  CHECK(rep.ap_per_threshold[0] == doctest::Approx(0.5));
  CHECK(rep.map50 == doctest::Approx(0.5));
  REQUIRE(rep.pr_curves.size() == 1);
  CHECK(rep.pr_curves[0].precision == std::vector<double>{1.0, 0.5});
  CHECK(rep.pr_curves[0].recall == std::vector<double>{0.5, 0.5});

  // low-scored miss before a hit: envelope rescues AP = 0.5
  const std::vector<Detection> order = {det("a", Box(50, 50, 60, 60), 0.9),
                                        det("a", Box(0, 0, 10, 10), 0.8)};
  rep = harness::eval_detections(order, gts, {0.5});
  CHECK(rep.ap_per_threshold[0] == doctest::Approx(0.25));
}

TEST_CASE("eval_detections empty-class conventions") {
  // no GT, no preds -> AP 1 and the class is logged
  auto rep = harness::eval_detections({}, {}, {0.5});
  CHECK(rep.map50 == doctest::Approx(1.0));
  REQUIRE(rep.empty_classes.size() == 1);
  CHECK(rep.empty_classes[0] == 0);

  // preds without GT -> AP 0
  rep = harness::eval_detections({det("a", Box(0, 0, 5, 5), 0.9)}, {}, {0.5});
  CHECK(rep.map50 == doctest::Approx(0.0));
  CHECK(rep.empty_classes.empty());

  // GT without preds -> AP 0
  rep = harness::eval_detections({}, {det("a", Box(0, 0, 5, 5), 1.0)}, {0.5});
  CHECK(rep.map50 == doctest::Approx(0.0));
}

TEST_CASE("eval_detections matches within the same image only") {
  const auto rep = harness::eval_detections(
      {det("a", Box(0, 0, 10, 10), 0.9)}, {det("b", Box(0, 0, 10, 10), 1.0)},
      {0.5});
  CHECK(rep.map50 == doctest::Approx(0.0));
}

TEST_CASE("eval_detections averages AP over classes") {
  const std::vector<Detection> gts = {det("a", Box(0, 0, 10, 10), 1.0, 0),
                                      det("a", Box(20, 20, 30, 30), 1.0, 1)};
  // class 0 perfect, class 1 missed entirely
  const auto rep = harness::eval_detections(
      {det("a", Box(0, 0, 10, 10), 0.9, 0)}, gts, {0.5});
  CHECK(rep.map50 == doctest::Approx(0.5));
}

TEST_CASE("eval_detections agrees with an independent recomputation") {
  std::mt19937_64 rng(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep_i = 0; rep_i < 60; ++rep_i) {
    std::vector<Detection> preds, gts;
    const int n_img = 1 + rep_i % 3;
    for (int g = 0; g < 6; ++g) {
      const double x = u(rng) * 40, y = u(rng) * 40;
      gts.push_back(det("img" + std::to_string(g % n_img),
                        Box(x, y, x + 4 + u(rng) * 6, y + 4 + u(rng) * 6), 1.0));
    }
    for (int p = 0; p < 10; ++p) {
      const Box& near = gts[static_cast<std::size_t>(p) % gts.size()].box;
      const double jx = (u(rng) - 0.5) * 6, jy = (u(rng) - 0.5) * 6;
      preds.push_back(det(gts[static_cast<std::size_t>(p) % gts.size()].image_id,
                          Box(near.x1 + jx, near.y1 + jy, near.x2 + jx,
                              near.y2 + jy),
                          u(rng)));
    }
    for (double thr : {0.5, 0.75}) {
      const auto rep = harness::eval_detections(preds, gts, {thr});
      CHECK(rep.ap_per_threshold[0] ==
            doctest::Approx(oracle_ap(preds, gts, thr)).epsilon(1e-12));
    }
  }
}

TEST_CASE("synth_scene determinism and bounds") {
  const auto a = harness::synth_scene(42, 96, 80, 3);
  const auto b = harness::synth_scene(42, 96, 80, 3);
  CHECK(a.image.data() == b.image.data());
  REQUIRE(a.gts.size() == 3);
  REQUIRE(b.gts.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.gts[i].box.x1 == b.gts[i].box.x1);
    CHECK(a.gts[i].box.x1 >= 0.0);
    CHECK(a.gts[i].box.y1 >= 0.0);
    CHECK(a.gts[i].box.x2 <= 96.0);
    CHECK(a.gts[i].box.y2 <= 80.0);
    CHECK(a.gts[i].image_id == "synth");
  }
  const auto c = harness::synth_scene(43, 96, 80, 3);
  CHECK(a.image.data() != c.image.data());

  // all pixels positive (speckle floor), finite
  for (double v : a.image.data()) CHECK(v > 0.0);

  CHECK_THROWS_AS(harness::synth_scene(1, 32, 96, 1), std::invalid_argument);
}

TEST_CASE("synth_scene ridges brighten their boxes") {
  const auto scene = harness::synth_scene(7, 128, 128, 2);
  // mean inside a GT box should exceed the global mean (amplitude 4 on
  // unit-mean speckle)
  double global = 0.0;
  for (double v : scene.image.data()) global += v;
  global /= static_cast<double>(scene.image.data().size());
  for (const Detection& g : scene.gts) {
    double inside = 0.0;
    int count = 0;
    for (std::size_t i = static_cast<std::size_t>(g.box.y1);
         i < static_cast<std::size_t>(g.box.y2); ++i)
      for (std::size_t j = static_cast<std::size_t>(g.box.x1);
           j < static_cast<std::size_t>(g.box.x2); ++j) {
        inside += scene.image.at(i, j);
        ++count;
      }
    CHECK(inside / count > global);
  }
}

TEST_CASE("simulate_threshold closed form") {
  // constant batch maxima 0.5, lambda 0.9, tau0 0.05:
  // tau_k = 0.5 - 0.45 * 0.9^k
  std::vector<std::vector<double>> stream(20, std::vector<double>{0.5});
  const auto traj = harness::simulate_threshold(stream, 0.9, 0.05);
  REQUIRE(traj.size() == 20);
  for (std::size_t k = 1; k <= 20; ++k)
    CHECK(traj[k - 1] ==
          doctest::Approx(0.5 - 0.45 * std::pow(0.9, static_cast<double>(k)))
              .epsilon(1e-12));

  // empty batches hold the value
  const auto hold = harness::simulate_threshold({{0.5}, {}, {}}, 0.9, 0.05);
  CHECK(hold[1] == hold[0]);
  CHECK(hold[2] == hold[0]);
}

TEST_CASE("tensor file round trip") {
  const std::string path = tmp_path("t.ten");
  const Tensor t({2, 3, 4}, [] {
    std::vector<double> d(24);
    for (std::size_t i = 0; i < 24; ++i) d[i] = static_cast<double>(i) * 0.25;
    return d;
  }());
  io::write_tensor(path, t);
  const Tensor back = io::read_tensor(path);
  CHECK(back.dims() == t.dims());
  CHECK(back.data() == t.data());  // all values exact in f32
  std::remove(path.c_str());
}

TEST_CASE("tensor file malformed inputs name a byte offset") {
  const std::string path = tmp_path("bad.ten");

  // bad magic
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE" << std::string(8, '\0');
  }
  CHECK_THROWS_AS(io::read_tensor(path), io::ParseError);

  // truncated payload: rank 1, dim 4, only 2 floats
  {
    std::ofstream out(path, std::ios::binary);
    out << "TEN1";
    const std::uint32_t rank = 1, dim = 4;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    const float f = 1.0f;
    out.write(reinterpret_cast<const char*>(&f), 4);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
  try {
    io::read_tensor(path);
    FAIL("expected ParseError");
  } catch (const io::ParseError& e) {
    CHECK(e.offset() == 20);  // 4 magic + 4 rank + 4 dim + 8 payload read
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }

  // zero dimension
  {
    std::ofstream out(path, std::ios::binary);
    out << "TEN1";
    const std::uint32_t rank = 2, d0 = 3, d1 = 0;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    out.write(reinterpret_cast<const char*>(&d0), 4);
    out.write(reinterpret_cast<const char*>(&d1), 4);
  }
  try {
    io::read_tensor(path);
    FAIL("expected ParseError");
  } catch (const io::ParseError& e) {
    CHECK(e.offset() == 12);  // offset of the zero dim field
  }

  // trailing bytes
  {
    std::ofstream out(path, std::ios::binary);
    out << "TEN1";
    const std::uint32_t rank = 1, dim = 1;
    out.write(reinterpret_cast<const char*>(&rank), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    const float f = 2.0f;
    out.write(reinterpret_cast<const char*>(&f), 4);
    out << "x";
  }
  CHECK_THROWS_AS(io::read_tensor(path), io::ParseError);
  std::remove(path.c_str());
}

TEST_CASE("embeddings file round trip") {
  const std::string path = tmp_path("e.emb");
  const std::vector<std::vector<double>> embs = {{1.0, 2.5}, {-3.0, 0.125}};
  io::write_embeddings(path, embs);
  CHECK(io::read_embeddings(path) == embs);

  io::write_embeddings(path, {});
  CHECK(io::read_embeddings(path).empty());
  std::remove(path.c_str());
}

TEST_CASE("memory bank file round trip") {
  const std::string path = tmp_path("b.mbk");
  membank::MemoryBank bank;
  bank.entries.push_back({{1.0, 2.0, 3.0}, 0.75, Box(1, 2, 5, 6), "img_a", 4});
  bank.entries.push_back({{0.5, -1.0, 0.0}, 0.25, Box(0, 0, 2, 2), "", 0});
  io::write_bank(path, bank);
  const auto back = io::read_bank(path, 128);
  CHECK(back.capacity == 128);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].feature == bank.entries[0].feature);
  CHECK(back.entries[0].confidence == 0.75);
  CHECK(back.entries[0].epoch == 4);
  CHECK(back.entries[0].image_id == "img_a");
  CHECK(back.entries[0].box.x1 == 1.0);
  CHECK(back.entries[1].image_id.empty());
  std::remove(path.c_str());
}

TEST_CASE("memory bank degenerate box names the box offset") {
  const std::string path = tmp_path("bad.mbk");
  {
    std::ofstream out(path, std::ios::binary);
    out << "MBK1";
    const std::uint32_t count = 1, dim = 1;
    out.write(reinterpret_cast<const char*>(&count), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    const float conf = 0.5f;
    const std::uint32_t epoch = 0;
    out.write(reinterpret_cast<const char*>(&conf), 4);
    out.write(reinterpret_cast<const char*>(&epoch), 4);
    // x2 < x1: degenerate
    const float box[4] = {5.0f, 0.0f, 1.0f, 2.0f};
    out.write(reinterpret_cast<const char*>(box), 16);
    const std::uint16_t len = 1;
    out.write(reinterpret_cast<const char*>(&len), 2);
    out << "a";
    const float feat = 0.0f;
    out.write(reinterpret_cast<const char*>(&feat), 4);
  }
  try {
    io::read_bank(path);
    FAIL("expected ParseError");
  } catch (const io::ParseError& e) {
    // 4 magic + 4 count + 4 dim + 4 conf + 4 epoch = 20
    CHECK(e.offset() == 20);
  }
  std::remove(path.c_str());
}

TEST_CASE("detections JSONL round trip and error offsets") {
  const std::string path = tmp_path("d.jsonl");
  const std::vector<Detection> dets = {det("a", Box(1, 2, 3, 4), 0.5, 0),
                                       det("b", Box(0, 0, 8, 8), 0.75, 1)};
  io::write_detections(path, dets);
  const auto back = io::read_detections(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_id == "a");
  CHECK(back[0].box.x2 == 3.0);
  CHECK(back[1].score == 0.75);
  CHECK(back[1].class_id == 1);

  // malformed second line reports the offset of that line
  std::string first_line;
  {
    std::ifstream in(path);
    std::getline(in, first_line);
  }
  {
    std::ofstream out(path);
    out << first_line << "\n{not json\n";
  }
  try {
    io::read_detections(path);
    FAIL("expected ParseError");
  } catch (const io::ParseError& e) {
    CHECK(e.offset() == first_line.size() + 1);
  }
  std::remove(path.c_str());
}

TEST_CASE("pipeline config") {
  using harness::PipelineConfig;
  const PipelineConfig def = PipelineConfig::from_json(nlohmann::json::object());
  CHECK(def.calib.k == 5);
  CHECK(def.calib.gamma == 10.0);
  CHECK(def.calib.delta == 0.7);
  CHECK(def.calib.mu == 0.7);
  CHECK(def.calib.lambda_ema == 0.9);
  CHECK(def.calib.tau0 == 0.05);
  CHECK(def.calib.momentum == 0.999);
  CHECK(def.profile.n_radial == 16);
  CHECK(def.profile.rho_c == 0.25);
  CHECK(def.eta == 0.8);
  CHECK(def.nms_iou == 0.5);
  CHECK(def.nms_conf == 0.25);

  const auto cfg = PipelineConfig::from_json(
      {{"calib.k", 3}, {"filter.scorer", "gmm"}, {"geometry.beta", 0.4}});
  CHECK(cfg.calib.k == 3);
  CHECK(cfg.scorer == "gmm");
  CHECK(cfg.calib.beta == 0.4);

  CHECK_THROWS_AS(PipelineConfig::from_json({{"calib.q", 1}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"filter.eta", 1.5}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"filter.scorer", "svm"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::from_json({{"geometry.window", 4}}),
                  std::invalid_argument);
}
