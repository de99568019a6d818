#pragma once

// Deterministic synthetic LiDAR-like scene stream with a source/target domain
// split and qualitative corruption analogs (fog, beam loss, crosstalk, ...).

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mos/boxsim.hpp"

namespace mos {

using Point3f = std::array<float, 3>;

/// What a detector is allowed to see of a scene.
struct PointCloud {
  std::vector<Point3f> points;
};

enum class PointTag : std::uint8_t { ground, object, clutter, spurious };

enum class CorruptionKind {
  none,
  fog,
  wet,
  snow,
  motion_blur,
  beam_missing,
  crosstalk,
  incomplete_echo,
  cross_sensor,
};

enum class Severity { light, moderate, heavy };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::none;
  Severity severity = Severity::moderate;
  bool operator==(const CorruptionSpec&) const = default;
};

std::string_view to_string(CorruptionKind kind);
std::string_view to_string(Severity severity);
CorruptionKind parse_corruption_kind(std::string_view name);
Severity parse_severity(std::string_view name);

/// Object and sensor statistics of one domain.
struct DomainConfig {
  double length_mean = 3.9, length_std = 0.25;
  double width_mean = 1.6, width_std = 0.08;
  double height_mean = 1.5, height_std = 0.08;
  double point_density = 1.0;  ///< multiplier on surface and ground point counts
  int beams = 64;              ///< elevation bands of the sensor
};

struct StreamConfig {
  std::size_t batches = 64;
  std::size_t scenes_per_batch = 4;
  double half_extent = 16.0;  ///< scenes span [-half_extent, half_extent]^2 around the sensor
  double sensor_height = 1.7;
  int min_objects = 3;
  int max_objects = 8;
  double yaw_jitter = 0.08;        ///< std-dev around the two road-aligned headings
  double object_surface_density = 12.0;  ///< points per m^2 of visible surface at 10 m
  std::size_t ground_points = 1200;
  int min_clutter = 2;
  int max_clutter = 6;
  double second_class_prob = 0.0;  ///< chance an object is a small class-1 object
  DomainConfig source{};
  DomainConfig target{};
  std::vector<CorruptionSpec> corruption_schedule{};  ///< cycled over the stream
  std::size_t corruption_segment = 16;                ///< batches per schedule entry

  /// Throws ConfigError on inconsistent values.
  void validate() const;
};

struct Scene {
  PointCloud cloud;
  std::vector<PointTag> tags;  // one per point
  BoxSet gt_boxes;
};

/// A batch of scenes. Adaptation code sees only `clouds`; `gt` is for the
/// evaluator.
struct SceneBatch {
  std::size_t index = 0;
  CorruptionSpec corruption{};
  std::vector<PointCloud> clouds;
  std::vector<BoxSet> gt;
  std::vector<std::vector<PointTag>> tags;

  std::size_t size() const noexcept { return clouds.size(); }
};

/// Generates one clean scene from a domain.
Scene generate_scene(const StreamConfig& config, const DomainConfig& domain, std::mt19937_64& rng);

/// Applies a corruption in place. Ground-truth boxes are never modified.
void apply_corruption(Scene& scene, const CorruptionSpec& spec, const StreamConfig& config,
                      std::mt19937_64& rng);

/// Corruption for batch `index` under the configured schedule.
CorruptionSpec corruption_for_batch(const StreamConfig& config, std::size_t index);

/// Target-domain stream: batch t is a pure function of (config, seed, t).
std::vector<SceneBatch> generate_stream(const StreamConfig& config, std::uint64_t seed);
SceneBatch generate_target_batch(const StreamConfig& config, std::uint64_t seed, std::size_t index);

/// Clean source-domain batch (pretraining data).
SceneBatch generate_source_batch(const StreamConfig& config, std::uint64_t seed, std::size_t index);

/// Elevation band of a point for a sensor with `beams` bands over [-25, 3] deg.
int elevation_band(const Point3f& p, double sensor_height, int beams);

/// Binary stream dump ("MOSS"); byte-identical for identical streams.
std::vector<std::uint8_t> encode_stream(const std::vector<SceneBatch>& stream);
std::vector<SceneBatch> decode_stream(const std::vector<std::uint8_t>& bytes);
void write_stream(const std::filesystem::path& path, const std::vector<SceneBatch>& stream);
std::vector<SceneBatch> read_stream(const std::filesystem::path& path);

}  // namespace mos
