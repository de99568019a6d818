#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "mos/error.hpp"
#include "mos/simstream.hpp"

using namespace mos;

namespace {

StreamConfig small_stream() {
  StreamConfig sc;
  sc.batches = 6;
  sc.scenes_per_batch = 2;
  sc.target.point_density = 0.7;
  sc.corruption_schedule = {{CorruptionKind::none}, {CorruptionKind::fog, Severity::heavy}, {CorruptionKind::snow}};
  sc.corruption_segment = 2;
  return sc;
}

Scene corrupted_copy(const Scene& scene, CorruptionSpec spec, const StreamConfig& sc, std::uint64_t seed) {
  Scene copy = scene;
  std::mt19937_64 rng(seed);
  apply_corruption(copy, spec, sc, rng);
  return copy;
}

}  // namespace

TEST(SimStream, SameSeedSameBytes) {
  const StreamConfig sc = small_stream();
  const auto a = encode_stream(generate_stream(sc, 5)), b = encode_stream(generate_stream(sc, 5));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, encode_stream(generate_stream(sc, 6)));
}

TEST(SimStream, BatchIsPureFunctionOfIndex) {
  const StreamConfig sc = small_stream();
  const auto stream = generate_stream(sc, 8);
  const auto single = generate_target_batch(sc, 8, 3);
  EXPECT_EQ(encode_stream({single}), encode_stream({stream[3]}));
}

TEST(SimStream, DumpRoundTrip) {
  const auto stream = generate_stream(small_stream(), 9);
  const auto path = std::filesystem::temp_directory_path() / "mos_stream_test.moss";
  write_stream(path, stream);
  const auto back = read_stream(path);
  std::filesystem::remove(path);
  EXPECT_EQ(encode_stream(back), encode_stream(stream));
  ASSERT_EQ(back.size(), stream.size());
  EXPECT_EQ(back[2].corruption, stream[2].corruption);
  EXPECT_EQ(back[2].gt, stream[2].gt);
}

TEST(SimStream, ScheduleCyclesBySegment) {
  const StreamConfig sc = small_stream();
  EXPECT_EQ(corruption_for_batch(sc, 0).kind, CorruptionKind::none);
  EXPECT_EQ(corruption_for_batch(sc, 3).kind, CorruptionKind::fog);
  EXPECT_EQ(corruption_for_batch(sc, 5).kind, CorruptionKind::snow);
  EXPECT_EQ(corruption_for_batch(sc, 6).kind, CorruptionKind::none);
  EXPECT_EQ(corruption_for_batch(StreamConfig{}, 17).kind, CorruptionKind::none);
}

TEST(SimStream, TargetLengthMeanFollowsConfig) {
  StreamConfig sc;
  sc.target.length_mean = 1.2 * sc.source.length_mean;
  std::mt19937_64 rng(10);
  double sum = 0.0;
  std::size_t n = 0;
  while (n < 500) {
    for (const auto& b : generate_scene(sc, sc.target, rng).gt_boxes) {
      sum += b.size[0];
      ++n;
    }
  }
  const double sigma = sc.target.length_std / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(sum / n, sc.target.length_mean, 3 * sigma);
}

TEST(Corruption, NoneIsIdentity) {
  const StreamConfig sc;
  std::mt19937_64 rng(11);
  const Scene scene = generate_scene(sc, sc.source, rng);
  for (auto sev : {Severity::light, Severity::heavy}) {
    const Scene c = corrupted_copy(scene, {CorruptionKind::none, sev}, sc, 1);
    EXPECT_EQ(c.cloud.points, scene.cloud.points);
    EXPECT_EQ(c.tags, scene.tags);
  }
}

TEST(Corruption, GroundTruthNeverChanges) {
  const StreamConfig sc;
  std::mt19937_64 rng(12);
  for (auto kind : {CorruptionKind::fog, CorruptionKind::wet, CorruptionKind::snow, CorruptionKind::motion_blur,
                    CorruptionKind::beam_missing, CorruptionKind::crosstalk, CorruptionKind::incomplete_echo,
                    CorruptionKind::cross_sensor}) {
    const Scene scene = generate_scene(sc, sc.source, rng);
    const Scene c = corrupted_copy(scene, {kind, Severity::heavy}, sc, 2);
    EXPECT_EQ(c.gt_boxes, scene.gt_boxes) << to_string(kind);
    EXPECT_EQ(c.tags.size(), c.cloud.points.size());
  }
}

TEST(Corruption, HeavyBeamMissingDropsHalfTheBands) {
  const StreamConfig sc;
  std::mt19937_64 rng(13);
  std::size_t before = 0, after = 0;
  for (int s = 0; s < 50; ++s) {
    const Scene scene = generate_scene(sc, sc.source, rng);
    const Scene c = corrupted_copy(scene, {CorruptionKind::beam_missing, Severity::heavy}, sc, 100 + s);
    before += scene.cloud.points.size();
    after += c.cloud.points.size();
    std::set<int> kept;
    for (const auto& p : c.cloud.points) kept.insert(elevation_band(p, sc.sensor_height, sc.target.beams));
    EXPECT_LE(kept.size(), static_cast<std::size_t>(sc.target.beams / 2));
  }
  const double ratio = static_cast<double>(after) / static_cast<double>(before);
  EXPECT_GE(ratio, 0.4);
  EXPECT_LE(ratio, 0.6);
}

TEST(Corruption, HeavierSeverityRemovesMorePoints) {
  const StreamConfig sc;
  std::mt19937_64 rng(14);
  for (auto kind : {CorruptionKind::fog, CorruptionKind::snow, CorruptionKind::beam_missing,
                    CorruptionKind::incomplete_echo, CorruptionKind::cross_sensor}) {
    double light = 0.0, moderate = 0.0, heavy = 0.0;
    for (int s = 0; s < 100; ++s) {
      const Scene scene = generate_scene(sc, sc.source, rng);
      auto removed = [&](Severity sev) {
        const Scene c = corrupted_copy(scene, {kind, sev}, sc, 1000 + s);
        std::size_t real = 0;
        for (auto t : c.tags) real += t != PointTag::spurious;
        return static_cast<double>(scene.cloud.points.size()) - static_cast<double>(real);
      };
      light += removed(Severity::light);
      moderate += removed(Severity::moderate);
      heavy += removed(Severity::heavy);
    }
    EXPECT_LT(light, moderate) << to_string(kind);
    EXPECT_LT(moderate, heavy) << to_string(kind);
  }
}

TEST(Corruption, CrosstalkAddsSpuriousPoints) {
  const StreamConfig sc;
  std::mt19937_64 rng(15);
  const Scene scene = generate_scene(sc, sc.source, rng);
  const Scene c = corrupted_copy(scene, {CorruptionKind::crosstalk, Severity::moderate}, sc, 3);
  EXPECT_GT(c.cloud.points.size(), scene.cloud.points.size());
}

TEST(StreamConfig, InvalidValuesThrow) {
  StreamConfig sc;
  sc.scenes_per_batch = 0;
  EXPECT_THROW(sc.validate(), Error);
  sc = StreamConfig{};
  sc.min_objects = 5;
  sc.max_objects = 2;
  EXPECT_THROW(sc.validate(), Error);
  EXPECT_THROW(parse_corruption_kind("hail"), Error);
  EXPECT_EQ(parse_corruption_kind("beam_missing"), CorruptionKind::beam_missing);
  EXPECT_EQ(parse_severity("heavy"), Severity::heavy);
}
