#include "mos/simstream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "mos/error.hpp"

namespace mos {

namespace {

constexpr double kElevationMinDeg = -25.0;
constexpr double kElevationMaxDeg = 3.0;
constexpr double kRefRange = 10.0;
constexpr std::size_t kMaxObjectPoints = 900;

double severity_factor(Severity s) {
  switch (s) {
    case Severity::light: return 1.0;
    case Severity::moderate: return 2.0;
    case Severity::heavy: return 3.0;
  }
  return 1.0;
}

double range_xy(const Point3f& p) { return std::hypot(static_cast<double>(p[0]), static_cast<double>(p[1])); }

double positive_normal(std::mt19937_64& rng, double mean, double std) {
  std::normal_distribution<double> n(mean, std);
  return std::max(0.5 * mean, n(rng));
}

struct Footprint {
  double x, y, radius;
};

bool collides(const std::vector<Footprint>& taken, const Footprint& f) {
  return std::any_of(taken.begin(), taken.end(), [&](const Footprint& t) {
    return std::hypot(t.x - f.x, t.y - f.y) < t.radius + f.radius + 0.4;
  });
}

bool inside_footprint(const Box3D& b, double x, double y) {
  const double dx = x - b.center[0], dy = y - b.center[1];
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.size[0] && std::abs(ly) <= 0.5 * b.size[1];
}

void sample_box_surface(const Box3D& box, const StreamConfig& config, const DomainConfig& domain,
                        std::mt19937_64& rng, Scene& scene) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double l = box.size[0], w = box.size[1], h = box.size[2];
  const double sx = -box.center[0], sy = -box.center[1];
  // Sensor position in the box frame.
  const double lsx = c * sx + s * sy, lsy = -s * sx + c * sy;
  struct Face {
    int axis;  // 0: +-x, 1: +-y, 2: top
    double sign;
    double area;
  };
  std::vector<Face> faces;
  if (lsx > 0.5 * l) faces.push_back({0, 1.0, w * h});
  if (lsx < -0.5 * l) faces.push_back({0, -1.0, w * h});
  if (lsy > 0.5 * w) faces.push_back({1, 1.0, l * h});
  if (lsy < -0.5 * w) faces.push_back({1, -1.0, l * h});
  if (config.sensor_height > h) faces.push_back({2, 1.0, l * w});
  double area = 0.0;
  for (const auto& f : faces) area += f.area;
  if (area <= 0.0) return;

  const double r = std::max(3.0, std::hypot(box.center[0], box.center[1]));
  const double expected = config.object_surface_density * domain.point_density * area *
                          (kRefRange / r) * (kRefRange / r);
  std::poisson_distribution<std::size_t> count_dist(std::max(1.0, expected));
  const std::size_t n = std::min(kMaxObjectPoints, count_dist(rng));

  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_real_distribution<double> pick(0.0, area);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (std::size_t i = 0; i < n; ++i) {
    double a = pick(rng);
    std::size_t fi = 0;
    while (fi + 1 < faces.size() && a > faces[fi].area) a -= faces[fi++].area;
    const Face& f = faces[fi];
    double lx = 0, ly = 0, lz = 0;
    if (f.axis == 0) {
      lx = f.sign * 0.5 * l, ly = u(rng) * w, lz = (u(rng) + 0.5) * h;
    } else if (f.axis == 1) {
      lx = u(rng) * l, ly = f.sign * 0.5 * w, lz = (u(rng) + 0.5) * h;
    } else {
      lx = u(rng) * l, ly = u(rng) * w, lz = h;
    }
    const double x = box.center[0] + c * lx - s * ly + noise(rng);
    const double y = box.center[1] + s * lx + c * ly + noise(rng);
    const double z = box.center[2] - 0.5 * h + lz + noise(rng);
    scene.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(z)});
    scene.tags.push_back(PointTag::object);
  }
}

void sample_clutter(const Footprint& f, double height, const StreamConfig& config, const DomainConfig& domain,
                    std::mt19937_64& rng, Scene& scene) {
  const double r = std::max(3.0, std::hypot(f.x, f.y));
  const double area = 3.14159 * f.radius * height;  // sensor-facing half of the cylinder
  const double expected = config.object_surface_density * domain.point_density * area *
                          (kRefRange / r) * (kRefRange / r);
  std::poisson_distribution<std::size_t> count_dist(std::max(1.0, expected));
  const std::size_t n = std::min(kMaxObjectPoints, count_dist(rng));
  const double facing = std::atan2(-f.y, -f.x);
  std::uniform_real_distribution<double> ang(facing - 1.4, facing + 1.4);
  std::uniform_real_distribution<double> hz(0.0, height);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = ang(rng);
    scene.cloud.points.push_back({static_cast<float>(f.x + f.radius * std::cos(a) + noise(rng)),
                                  static_cast<float>(f.y + f.radius * std::sin(a) + noise(rng)),
                                  static_cast<float>(hz(rng))});
    scene.tags.push_back(PointTag::clutter);
  }
}

template <typename Keep>
void filter_points(Scene& scene, Keep keep) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < scene.cloud.points.size(); ++i) {
    if (!keep(scene.cloud.points[i], scene.tags[i])) continue;
    scene.cloud.points[out] = scene.cloud.points[i];
    scene.tags[out] = scene.tags[i];
    ++out;
  }
  scene.cloud.points.resize(out);
  scene.tags.resize(out);
}

void jitter_points(Scene& scene, double sigma_xy, double sigma_z, std::mt19937_64& rng) {
  std::normal_distribution<double> nxy(0.0, sigma_xy), nz(0.0, sigma_z > 0 ? sigma_z : 1e-12);
  for (auto& p : scene.cloud.points) {
    p[0] = static_cast<float>(p[0] + nxy(rng));
    p[1] = static_cast<float>(p[1] + nxy(rng));
    p[2] = static_cast<float>(p[2] + nz(rng));
  }
}

void add_spurious(Scene& scene, std::size_t count, double radius, double z_lo, double z_hi,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> xy(-radius, radius), z(z_lo, z_hi);
  for (std::size_t i = 0; i < count; ++i) {
    scene.cloud.points.push_back({static_cast<float>(xy(rng)), static_cast<float>(xy(rng)),
                                  static_cast<float>(z(rng))});
    scene.tags.push_back(PointTag::spurious);
  }
}

std::mt19937_64 batch_rng(std::uint64_t seed, std::size_t index, std::uint32_t stream_tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream_tag};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::none: return "none";
    case CorruptionKind::fog: return "fog";
    case CorruptionKind::wet: return "wet";
    case CorruptionKind::snow: return "snow";
    case CorruptionKind::motion_blur: return "motion_blur";
    case CorruptionKind::beam_missing: return "beam_missing";
    case CorruptionKind::crosstalk: return "crosstalk";
    case CorruptionKind::incomplete_echo: return "incomplete_echo";
    case CorruptionKind::cross_sensor: return "cross_sensor";
  }
  return "none";
}

std::string_view to_string(Severity severity) {
  switch (severity) {
    case Severity::light: return "light";
    case Severity::moderate: return "moderate";
    case Severity::heavy: return "heavy";
  }
  return "moderate";
}

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (auto k : {CorruptionKind::none, CorruptionKind::fog, CorruptionKind::wet, CorruptionKind::snow,
                 CorruptionKind::motion_blur, CorruptionKind::beam_missing, CorruptionKind::crosstalk,
                 CorruptionKind::incomplete_echo, CorruptionKind::cross_sensor})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::ConfigError, "unknown corruption kind '" + std::string(name) + "'");
}

Severity parse_severity(std::string_view name) {
  for (auto s : {Severity::light, Severity::moderate, Severity::heavy})
    if (to_string(s) == name) return s;
  throw Error(ErrorCode::ConfigError, "unknown severity '" + std::string(name) + "'");
}

void StreamConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, "stream: " + what); };
  if (scenes_per_batch == 0) fail("scenes_per_batch must be positive");
  if (!(half_extent > 4.0)) fail("half_extent must exceed 4 m");
  if (min_objects < 0 || max_objects < min_objects) fail("object count range is invalid");
  if (min_clutter < 0 || max_clutter < min_clutter) fail("clutter count range is invalid");
  if (!(object_surface_density > 0.0)) fail("object_surface_density must be positive");
  if (!(second_class_prob >= 0.0 && second_class_prob <= 1.0)) fail("second_class_prob must be in [0,1]");
  if (corruption_segment == 0) fail("corruption_segment must be positive");
  for (const DomainConfig* d : {&source, &target}) {
    if (!(d->length_mean > 0 && d->width_mean > 0 && d->height_mean > 0)) fail("object size means must be positive");
    if (d->length_std < 0 || d->width_std < 0 || d->height_std < 0) fail("object size std-devs must be >= 0");
    if (!(d->point_density > 0.0)) fail("point_density must be positive");
    if (d->beams < 2) fail("beams must be at least 2");
  }
}

int elevation_band(const Point3f& p, double sensor_height, int beams) {
  const double elev = std::atan2(static_cast<double>(p[2]) - sensor_height, range_xy(p)) * 180.0 / kPi;
  const double t = (elev - kElevationMinDeg) / (kElevationMaxDeg - kElevationMinDeg);
  return std::clamp(static_cast<int>(std::floor(t * beams)), 0, beams - 1);
}

Scene generate_scene(const StreamConfig& config, const DomainConfig& domain, std::mt19937_64& rng) {
  Scene scene;
  const double margin = 2.5;
  std::uniform_real_distribution<double> pos(-config.half_extent + margin, config.half_extent - margin);
  std::uniform_int_distribution<int> n_obj(config.min_objects, config.max_objects);
  std::uniform_int_distribution<int> n_clutter(config.min_clutter, config.max_clutter);
  std::bernoulli_distribution coin(0.5), second(config.second_class_prob);
  std::normal_distribution<double> jitter(0.0, config.yaw_jitter > 0 ? config.yaw_jitter : 1e-12);
  std::vector<Footprint> taken;

  const int objects = n_obj(rng);
  for (int i = 0, attempts = 0; i < objects && attempts < 200; ++attempts) {
    Box3D box;
    box.class_id = second(rng) ? 1 : 0;
    if (box.class_id == 0) {
      box.size = {positive_normal(rng, domain.length_mean, domain.length_std),
                  positive_normal(rng, domain.width_mean, domain.width_std),
                  positive_normal(rng, domain.height_mean, domain.height_std)};
    } else {
      box.size = {positive_normal(rng, 0.8, 0.1), positive_normal(rng, 0.7, 0.08),
                  positive_normal(rng, 1.7, 0.1)};
    }
    box.center = {pos(rng), pos(rng), 0.5 * box.size[2]};
    box.yaw = wrap_angle((coin(rng) ? 0.0 : 0.5 * kPi) + (coin(rng) ? kPi : 0.0) + jitter(rng));
    box.score = 1.0;
    const Footprint f{box.center[0], box.center[1], 0.5 * std::hypot(box.size[0], box.size[1])};
    if (std::hypot(f.x, f.y) < 4.0 + f.radius || collides(taken, f)) continue;
    taken.push_back(f);
    scene.gt_boxes.push_back(box);
    ++i;
  }
  for (const auto& box : scene.gt_boxes) sample_box_surface(box, config, domain, rng, scene);

  const int clutter = n_clutter(rng);
  std::uniform_real_distribution<double> bush_r(0.3, 0.9), bush_h(0.4, 1.2), pole_h(2.0, 4.0);
  for (int i = 0, attempts = 0; i < clutter && attempts < 200; ++attempts) {
    const bool pole = coin(rng);
    const Footprint f{pos(rng), pos(rng), pole ? 0.15 : bush_r(rng)};
    if (std::hypot(f.x, f.y) < 3.0 || collides(taken, f)) continue;
    taken.push_back(f);
    sample_clutter(f, pole ? pole_h(rng) : bush_h(rng), config, domain, rng, scene);
    ++i;
  }

  std::uniform_real_distribution<double> gxy(-config.half_extent, config.half_extent);
  std::normal_distribution<double> gz(0.0, 0.02);
  const auto ground = static_cast<std::size_t>(std::round(config.ground_points * domain.point_density));
  for (std::size_t i = 0; i < ground; ++i) {
    const double x = gxy(rng), y = gxy(rng);
    // Nearer ground returns are denser.
    const double keep = std::min(1.0, 6.0 / std::max(1.0, std::hypot(x, y)));
    if (std::generate_canonical<double, 53>(rng) > keep) continue;
    if (std::any_of(scene.gt_boxes.begin(), scene.gt_boxes.end(),
                    [&](const Box3D& b) { return inside_footprint(b, x, y); }))
      continue;
    scene.cloud.points.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(gz(rng))});
    scene.tags.push_back(PointTag::ground);
  }
  return scene;
}

void apply_corruption(Scene& scene, const CorruptionSpec& spec, const StreamConfig& config,
                      std::mt19937_64& rng) {
  if (spec.kind == CorruptionKind::none) return;
  const double f = severity_factor(spec.severity);
  auto uniform = [&rng] { return std::generate_canonical<double, 53>(rng); };
  const std::size_t n0 = scene.cloud.points.size();
  switch (spec.kind) {
    case CorruptionKind::none:
      break;
    case CorruptionKind::fog:
      filter_points(scene, [&](const Point3f& p, PointTag) {
        return uniform() >= std::min(0.9, 0.012 * f * range_xy(p));
      });
      jitter_points(scene, 0.015 * f, 0.015 * f, rng);
      break;
    case CorruptionKind::wet:
      filter_points(scene, [&](const Point3f& p, PointTag t) {
        const double drop = t == PointTag::ground ? 0.2 * f : 0.003 * f * range_xy(p);
        return uniform() >= drop;
      });
      jitter_points(scene, 0.01 * f, 0.01 * f, rng);
      break;
    case CorruptionKind::snow:
      filter_points(scene, [&](const Point3f& p, PointTag) {
        return uniform() >= std::min(0.9, 0.07 * f + 0.004 * f * range_xy(p));
      });
      jitter_points(scene, 0.02 * f, 0.02 * f, rng);
      add_spurious(scene, static_cast<std::size_t>(80 * f), 12.0, 0.2, 3.0, rng);
      break;
    case CorruptionKind::motion_blur:
      jitter_points(scene, 0.04 * f, 0.02 * f, rng);
      break;
    case CorruptionKind::beam_missing: {
      const double fraction = spec.severity == Severity::heavy ? 0.5 : spec.severity == Severity::moderate ? 1.0 / 3.0 : 0.25;
      const int beams = config.target.beams;
      const int offset = std::uniform_int_distribution<int>(0, beams - 1)(rng);
      std::vector<char> dropped(static_cast<std::size_t>(beams), 0);
      for (int b = 0; b < beams; ++b) {
        const int shifted = (b + offset) % beams;
        dropped[static_cast<std::size_t>(b)] =
            std::floor((shifted + 1) * fraction) > std::floor(shifted * fraction) ? 1 : 0;
      }
      filter_points(scene, [&](const Point3f& p, PointTag) {
        return !dropped[static_cast<std::size_t>(elevation_band(p, config.sensor_height, beams))];
      });
      break;
    }
    case CorruptionKind::crosstalk:
      add_spurious(scene, static_cast<std::size_t>(0.04 * f * static_cast<double>(n0)), config.half_extent,
                   0.0, 2.5, rng);
      break;
    case CorruptionKind::incomplete_echo:
      filter_points(scene, [&](const Point3f&, PointTag t) {
        return uniform() >= (t == PointTag::object ? std::min(0.9, 0.25 * f) : 0.02 * f);
      });
      break;
    case CorruptionKind::cross_sensor: {
      const double keep = spec.severity == Severity::heavy ? 0.4 : spec.severity == Severity::moderate ? 0.55 : 0.75;
      filter_points(scene, [&](const Point3f&, PointTag) { return uniform() < keep; });
      break;
    }
  }
  if (scene.cloud.points.empty()) {
    // Keep at least one return so downstream code never sees an empty cloud.
    scene.cloud.points.push_back({0.0f, 0.0f, 0.0f});
    scene.tags.push_back(PointTag::spurious);
  }
}

CorruptionSpec corruption_for_batch(const StreamConfig& config, std::size_t index) {
  if (config.corruption_schedule.empty()) return {};
  return config.corruption_schedule[(index / config.corruption_segment) % config.corruption_schedule.size()];
}

SceneBatch generate_target_batch(const StreamConfig& config, std::uint64_t seed, std::size_t index) {
  auto rng = batch_rng(seed, index, 0x7a11);
  SceneBatch batch;
  batch.index = index;
  batch.corruption = corruption_for_batch(config, index);
  for (std::size_t s = 0; s < config.scenes_per_batch; ++s) {
    Scene scene = generate_scene(config, config.target, rng);
    apply_corruption(scene, batch.corruption, config, rng);
    batch.clouds.push_back(std::move(scene.cloud));
    batch.gt.push_back(std::move(scene.gt_boxes));
    batch.tags.push_back(std::move(scene.tags));
  }
  return batch;
}

SceneBatch generate_source_batch(const StreamConfig& config, std::uint64_t seed, std::size_t index) {
  auto rng = batch_rng(seed, index, 0x5012);
  SceneBatch batch;
  batch.index = index;
  for (std::size_t s = 0; s < config.scenes_per_batch; ++s) {
    Scene scene = generate_scene(config, config.source, rng);
    batch.clouds.push_back(std::move(scene.cloud));
    batch.gt.push_back(std::move(scene.gt_boxes));
    batch.tags.push_back(std::move(scene.tags));
  }
  return batch;
}

std::vector<SceneBatch> generate_stream(const StreamConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<SceneBatch> stream(config.batches);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < config.batches; ++t) stream[t] = generate_target_batch(config, seed, t);
  return stream;
}

// ---------------------------------------------------------------------------
// Stream dump

namespace {

constexpr char kStreamMagic[4] = {'M', 'O', 'S', 'S'};
constexpr std::uint32_t kStreamVersion = 1;

struct ByteWriter {
  std::vector<std::uint8_t> out;
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

struct ByteReader {
  const std::vector<std::uint8_t>& in;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (in.size() - pos < n) throw Error(ErrorCode::IoError, "truncated stream file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace

std::vector<std::uint8_t> encode_stream(const std::vector<SceneBatch>& stream) {
  ByteWriter w;
  w.out.assign(std::begin(kStreamMagic), std::end(kStreamMagic));
  w.u32(kStreamVersion);
  w.u64(stream.size());
  for (const auto& batch : stream) {
    w.u64(batch.index);
    w.u32(static_cast<std::uint32_t>(batch.corruption.kind));
    w.u32(static_cast<std::uint32_t>(batch.corruption.severity));
    w.u64(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto& pts = batch.clouds[s].points;
      w.u64(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        for (float c : pts[i]) w.f32(c);
        w.out.push_back(s < batch.tags.size() && i < batch.tags[s].size()
                            ? static_cast<std::uint8_t>(batch.tags[s][i])
                            : static_cast<std::uint8_t>(PointTag::ground));
      }
      w.u64(batch.gt[s].size());
      for (const auto& b : batch.gt[s]) {
        for (double c : b.center) w.f64(c);
        for (double c : b.size) w.f64(c);
        w.f64(b.yaw);
        w.u32(static_cast<std::uint32_t>(b.class_id));
        w.f64(b.score);
      }
    }
  }
  return std::move(w.out);
}

std::vector<SceneBatch> decode_stream(const std::vector<std::uint8_t>& bytes) {
  ByteReader r{bytes};
  r.need(4);
  if (!std::equal(std::begin(kStreamMagic), std::end(kStreamMagic), bytes.begin()))
    throw Error(ErrorCode::IoError, "bad stream magic");
  r.pos = 4;
  if (r.u32() != kStreamVersion) throw Error(ErrorCode::IoError, "unsupported stream version");
  std::vector<SceneBatch> stream(r.u64());
  for (auto& batch : stream) {
    batch.index = r.u64();
    batch.corruption.kind = static_cast<CorruptionKind>(r.u32());
    batch.corruption.severity = static_cast<Severity>(r.u32());
    const std::size_t scenes = r.u64();
    batch.clouds.resize(scenes);
    batch.gt.resize(scenes);
    batch.tags.resize(scenes);
    for (std::size_t s = 0; s < scenes; ++s) {
      const std::size_t n = r.u64();
      batch.clouds[s].points.resize(n);
      batch.tags[s].resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (auto& c : batch.clouds[s].points[i]) c = r.f32();
        r.need(1);
        batch.tags[s][i] = static_cast<PointTag>(bytes[r.pos++]);
      }
      batch.gt[s].resize(r.u64());
      for (auto& b : batch.gt[s]) {
        for (auto& c : b.center) c = r.f64();
        for (auto& c : b.size) c = r.f64();
        b.yaw = r.f64();
        b.class_id = static_cast<int>(r.u32());
        b.score = r.f64();
      }
    }
  }
  if (r.pos != bytes.size()) throw Error(ErrorCode::IoError, "trailing bytes in stream file");
  return stream;
}

void write_stream(const std::filesystem::path& path, const std::vector<SceneBatch>& stream) {
  const auto bytes = encode_stream(stream);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<SceneBatch> read_stream(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_stream(bytes);
}

}  // namespace mos
