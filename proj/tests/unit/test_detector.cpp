#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mos/detector.hpp"
#include "mos/error.hpp"
#include "mos/evaluation.hpp"
#include "mos/harness.hpp"
#include "oracles.hpp"

using namespace mos;

namespace {

DetectorConfig toy_config() {
  DetectorConfig dc;
  dc.half_extent = 8.0;
  dc.grid = 16;
  dc.layers = {{4, 3, 2}, {4, 3, 1}};
  return dc;
}

StreamConfig toy_stream() {
  StreamConfig sc;
  sc.half_extent = 8.0;
  sc.ground_points = 300;
  sc.min_objects = 1;
  sc.max_objects = 3;
  return sc;
}

Box3D scored(double x, double score) {
  Box3D b;
  b.center = {x, 0.0, 0.0};
  b.size = {4.0, 1.8, 1.5};
  b.score = score;
  return b;
}

}  // namespace

TEST(DetectorConfig, Validation) {
  DetectorConfig dc;
  EXPECT_NO_THROW(dc.validate());
  EXPECT_EQ(dc.feature_grid(), 32u);
  dc.layers.clear();
  EXPECT_THROW(dc.validate(), Error);
  dc = DetectorConfig{};
  dc.layers[0].kernel = 2;
  EXPECT_THROW(dc.validate(), Error);
  dc = DetectorConfig{};
  dc.score_threshold = 1.0;
  EXPECT_THROW(Detector{dc}, Error);
}

TEST(Detector, ZeroParamsDetectNothing) {
  const Detector det(toy_config());
  const auto batch = generate_source_batch(toy_stream(), 1, 0);
  for (const auto& out : det.infer(det.zero_params(), batch.clouds)) {
    EXPECT_TRUE(out.boxes.empty());
    EXPECT_EQ(out.features.height, det.config().feature_grid());
    EXPECT_EQ(out.features.depth, det.config().feature_depth());
  }
}

TEST(Detector, InferenceIsPureAndExecIndependent) {
  DetectorConfig serial = toy_config(), parallel = toy_config();
  serial.exec = Exec::serial;
  parallel.exec = Exec::parallel;
  const Detector a(serial), b(parallel);
  ParamVector params = a.init_params(3);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 0.5f);
  for (auto& v : params.values()) v += n(rng);
  const auto batch = generate_source_batch(toy_stream(), 2, 0);
  const auto first = a.infer(params, batch.clouds), second = a.infer(params, batch.clouds);
  const auto other = b.infer(params, batch.clouds);
  ASSERT_EQ(first.size(), batch.size());
  for (std::size_t s = 0; s < first.size(); ++s) {
    EXPECT_EQ(first[s].boxes, second[s].boxes);
    EXPECT_EQ(first[s].features.data, second[s].features.data);
    EXPECT_EQ(first[s].boxes, other[s].boxes);
    EXPECT_EQ(first[s].features.data, other[s].features.data);
    for (std::size_t i = 1; i < first[s].boxes.size(); ++i)
      EXPECT_GE(first[s].boxes[i - 1].score, first[s].boxes[i].score);
  }
}

TEST(Detector, WrongLayoutThrows) {
  const Detector det(toy_config());
  const ParamVector wrong(ParamLayout{{"x", {3}}});
  const auto batch = generate_source_batch(toy_stream(), 1, 0);
  try {
    det.infer(wrong, batch.clouds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayoutMismatch);
  }
}

TEST(Detector, PretrainedSourceRecoversCleanScene) {
  RunConfig config;
  const ParamVector source = load_or_pretrain_source(config, MOS_TEST_CACHE_DIR);
  const Detector det(config.detector);
  StreamConfig clean = config.stream;
  clean.target = clean.source;
  std::mt19937_64 rng(99);
  Scene scene;
  do {
    scene = generate_scene(clean, clean.source, rng);
  } while (scene.gt_boxes.size() != 3);
  const auto out = det.infer_scene(source, scene.cloud);
  const auto summary = evaluate(std::vector<BoxSet>{out.boxes}, std::vector<BoxSet>{scene.gt_boxes}, 0.5);
  EXPECT_EQ(summary.classes.at(0).true_positives, 3u);
  EXPECT_EQ(summary.recall, 1.0);
}

TEST(PseudoLabel, ThresholdFilter) {
  PseudoLabelConfig cfg;
  cfg.threshold = 0.6;
  const std::vector<BoxSet> low = {{scored(0, 0.3), scored(8, 0.59)}};
  EXPECT_TRUE(pseudo_label(low, cfg).labels[0].empty());
  const std::vector<BoxSet> mixed = {{scored(0, 0.9), scored(8, 0.55)}};
  const auto out = pseudo_label(mixed, cfg);
  ASSERT_EQ(out.labels[0].size(), 1u);
  EXPECT_EQ(out.labels[0][0].score, 0.9);
  ASSERT_EQ(out.ignored[0].size(), 1u);
  EXPECT_EQ(out.ignored[0][0].score, 0.55);
}

TEST(PseudoLabel, NmsKeepsBestOfOverlappingPair) {
  PseudoLabelConfig cfg;
  Box3D a = scored(0, 0.9), b = scored(0, 0.8);
  b.size[0] = 5.0;  // IoU 0.8
  ASSERT_NEAR(box_iou(a, b), 0.8, 1e-12);
  const auto out = pseudo_label(std::vector<BoxSet>{{b, a}}, cfg);
  ASSERT_EQ(out.labels[0].size(), 1u);
  EXPECT_EQ(out.labels[0][0], a);
}

TEST(PseudoLabel, OutputIsSubsetOfInput) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    BoxSet preds;
    for (int i = 0; i < 10; ++i) preds.push_back(scored(u(rng) * 20, u(rng)));
    const auto out = pseudo_label(std::vector<BoxSet>{preds}, PseudoLabelConfig{});
    for (const auto* set : {&out.labels[0], &out.ignored[0]})
      for (const auto& b : *set) EXPECT_NE(std::find(preds.begin(), preds.end(), b), preds.end());
  }
}

TEST(WorldScale, SampleRanges) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 2000; ++i) {
    const double s = sample_world_scale(AugmentStrength::strong, rng);
    EXPECT_GE(s, 0.9);
    EXPECT_LE(s, 1.1);
    const double w = sample_world_scale(AugmentStrength::weak, rng);
    EXPECT_GE(w, 0.95);
    EXPECT_LE(w, 1.05);
  }
}

TEST(WorldScale, ScalesBoxesAndPoints) {
  Box3D unit;
  unit.center = {1.0, -2.0, 0.5};
  unit.size = {1.0, 1.0, 1.0};
  Box3D b = unit;
  scale_box(b, 1.1);
  EXPECT_DOUBLE_EQ(b.size[0], 1.1);
  EXPECT_DOUBLE_EQ(b.size[2], 1.1);
  EXPECT_DOUBLE_EQ(b.center[1], -2.2);
  EXPECT_EQ(b.yaw, unit.yaw);

  std::vector<PointCloud> clouds = {PointCloud{{{1.0f, 2.0f, 3.0f}}}};
  std::vector<TrainTarget> targets = {TrainTarget{{unit}, {unit}}};
  auto same_clouds = clouds;
  auto same_targets = targets;
  apply_world_scale(same_clouds, same_targets, 1.0);
  EXPECT_EQ(same_clouds[0].points, clouds[0].points);
  EXPECT_EQ(same_targets[0].labels, targets[0].labels);

  apply_world_scale(clouds, targets, 2.0);
  EXPECT_EQ(clouds[0].points[0], (Point3f{2.0f, 4.0f, 6.0f}));
  EXPECT_DOUBLE_EQ(targets[0].labels[0].size[0], 2.0);
  EXPECT_DOUBLE_EQ(targets[0].ignored[0].center[0], 2.0);
}

TEST(WorldScale, PreservesIouOfAxisAlignedBoxes) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.5, 3.0);
  for (int t = 0; t < 200; ++t) {
    Box3D a, b;
    a.center = {u(rng), u(rng), u(rng)};
    b.center = {u(rng), u(rng), u(rng)};
    a.size = {u(rng), u(rng), u(rng)};
    b.size = {u(rng), u(rng), u(rng)};
    const double before = box_iou(a, b);
    const double s = 0.9 + 0.2 * (u(rng) - 0.5) / 2.5;
    scale_box(a, s);
    scale_box(b, s);
    EXPECT_NEAR(box_iou(a, b), before, 1e-12);
  }
}

TEST(TrainStep, NoLabelsOrZeroRateLeavesParamsUnchanged) {
  const Detector det(toy_config());
  const ParamVector p = det.init_params(4);
  const auto batch = generate_source_batch(toy_stream(), 4, 0);
  std::vector<TrainTarget> empty(batch.size());
  EXPECT_EQ(det.train_step(p, batch.clouds, empty, 0.1), p);
  std::vector<TrainTarget> labeled(batch.size());
  labeled[0].labels = batch.gt[0];
  EXPECT_EQ(det.train_step(p, batch.clouds, labeled, 0.0), p);
  EXPECT_NE(det.train_step(p, batch.clouds, labeled, 1e-2), p);
}

TEST(TrainStep, GradientClipBoundsStep) {
  const Detector det(toy_config());
  const ParamVector p = det.init_params(5);
  const auto batch = generate_source_batch(toy_stream(), 5, 0);
  std::vector<TrainTarget> labeled(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) labeled[s].labels = batch.gt[s];
  const ParamVector q = det.train_step(p, batch.clouds, labeled, 1.0, 0.5);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(q.values()[i]) - p.values()[i];
    norm2 += d * d;
  }
  EXPECT_LE(std::sqrt(norm2), 0.5 + 1e-5);
}

TEST(TrainStep, NonFiniteParamsDiverge) {
  const Detector det(toy_config());
  ParamVector p = det.init_params(6);
  p.values()[0] = NAN;
  const auto batch = generate_source_batch(toy_stream(), 6, 0);
  std::vector<TrainTarget> labeled(batch.size());
  labeled[0].labels = batch.gt[0];
  try {
    det.train_step(p, batch.clouds, labeled, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TrainingDiverged);
  }
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_LE(oracle::detector_gradient_error(seed), 1e-4) << seed;
}

TEST(Gradient, LossDecreasesAlongNegativeGradient) {
  const Detector det(toy_config());
  const auto batch = generate_source_batch(toy_stream(), 7, 0);
  std::vector<TrainTarget> labeled(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) labeled[s].labels = batch.gt[s];
  const auto p = det.init_params(7).to_double();
  std::vector<double> g(p.size());
  const double before = det.loss_and_grad(p, batch.clouds, labeled, g).total;
  auto q = p;
  for (std::size_t i = 0; i < q.size(); ++i) q[i] -= 1e-4 * g[i];
  EXPECT_LT(det.loss_and_grad(q, batch.clouds, labeled, {}).total, before);
}
