#include "mos/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "mos/error.hpp"

namespace mos {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

std::string_view to_string(RankMethod m) { return m == RankMethod::exact_svd ? "exact_svd" : "nuclear_norm"; }
std::string_view to_string(Exec e) { return e == Exec::serial ? "serial" : "parallel"; }

template <class T>
T parse_named(std::string_view name, std::initializer_list<T> all) {
  for (T v : all)
    if (to_string(v) == name) return v;
  fail("unknown value '" + std::string(name) + "'");
}

// Reader and Writer share one field list (visit_fields) so the two
// directions cannot drift apart.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_ + ": expected an object");
  }

  template <class T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) read(*it, out, path_ + "." + key);
  }

  template <class F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) {
      Reader r(*it, path_ + "." + key);
      body(r);
      r.finish();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(path_ + ": unknown key '" + key + "'");
  }

 private:
  template <class T>
  static void read(const json& v, T& out, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(path + ": expected a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path + ": expected an integer");
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path + ": expected a number");
      out = v.get<T>();
      if (!std::isfinite(out)) fail(path + ": must be finite");
    } else if constexpr (std::is_enum_v<T>) {
      if (!v.is_string()) fail(path + ": expected a string");
      out = parse_enum<T>(v.get<std::string>());
    } else if constexpr (std::is_same_v<T, std::array<double, 3>>) {
      if (!v.is_array() || v.size() != 3) fail(path + ": expected three numbers");
      for (std::size_t i = 0; i < 3; ++i) read(v[i], out[i], path);
    } else {
      if (!v.is_array()) fail(path + ": expected an array");
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        Reader r(v[i], path + "[" + std::to_string(i) + "]");
        typename T::value_type item{};
        visit_fields(r, item);
        r.finish();
        out.push_back(item);
      }
    }
  }

  template <class T>
  static T parse_enum(const std::string& s) {
    if constexpr (std::is_same_v<T, RunMode>) return parse_run_mode(s);
    else if constexpr (std::is_same_v<T, FeatSimMode>) return parse_featsim_mode(s);
    else if constexpr (std::is_same_v<T, RankMethod>)
      return parse_named(s, {RankMethod::exact_svd, RankMethod::nuclear_norm});
    else if constexpr (std::is_same_v<T, Exec>) return parse_named(s, {Exec::serial, Exec::parallel});
    else if constexpr (std::is_same_v<T, CorruptionKind>) return parse_corruption_kind(s);
    else return parse_severity(s);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <class T>
  void field(const char* key, const T& value) {
    j[key] = write(value);
  }

  template <class F>
  void section(const char* key, F&& body) {
    Writer w;
    body(w);
    j[key] = std::move(w.j);
  }

  json j = json::object();

 private:
  template <class T>
  static json write(const T& v) {
    if constexpr (std::is_arithmetic_v<T>) return v;
    else if constexpr (std::is_enum_v<T>) return std::string(to_string(v));
    else if constexpr (std::is_same_v<T, std::array<double, 3>>) return json::array({v[0], v[1], v[2]});
    else {
      json arr = json::array();
      for (auto item : v) {
        Writer w;
        visit_fields(w, item);
        arr.push_back(std::move(w.j));
      }
      return arr;
    }
  }
};

template <class V>
void visit_fields(V& v, ConvLayerConfig& c) {
  v.field("out_channels", c.out_channels);
  v.field("kernel", c.kernel);
  v.field("stride", c.stride);
}

template <class V>
void visit_fields(V& v, CorruptionSpec& c) {
  v.field("kind", c.kind);
  v.field("severity", c.severity);
}

template <class V>
void visit_fields(V& v, DomainConfig& c) {
  v.field("length_mean", c.length_mean);
  v.field("length_std", c.length_std);
  v.field("width_mean", c.width_mean);
  v.field("width_std", c.width_std);
  v.field("height_mean", c.height_mean);
  v.field("height_std", c.height_std);
  v.field("point_density", c.point_density);
  v.field("beams", c.beams);
}

template <class V>
void visit_fields(V& v, StreamConfig& c) {
  v.field("batches", c.batches);
  v.field("scenes_per_batch", c.scenes_per_batch);
  v.field("half_extent", c.half_extent);
  v.field("sensor_height", c.sensor_height);
  v.field("min_objects", c.min_objects);
  v.field("max_objects", c.max_objects);
  v.field("yaw_jitter", c.yaw_jitter);
  v.field("object_surface_density", c.object_surface_density);
  v.field("ground_points", c.ground_points);
  v.field("min_clutter", c.min_clutter);
  v.field("max_clutter", c.max_clutter);
  v.field("second_class_prob", c.second_class_prob);
  v.section("source", [&](auto& s) { visit_fields(s, c.source); });
  v.section("target", [&](auto& s) { visit_fields(s, c.target); });
  v.field("corruption_schedule", c.corruption_schedule);
  v.field("corruption_segment", c.corruption_segment);
}

template <class V>
void visit_fields(V& v, DetectorConfig& c) {
  v.field("half_extent", c.half_extent);
  v.field("grid", c.grid);
  v.field("layers", c.layers);
  v.field("prior_prob", c.prior_prob);
  v.field("score_threshold", c.score_threshold);
  v.field("nms_iou", c.nms_iou);
  v.field("max_detections", c.max_detections);
  v.field("anchor_size", c.anchor_size);
  v.field("focal_alpha", c.focal_alpha);
  v.field("focal_gamma", c.focal_gamma);
  v.field("reg_weight", c.reg_weight);
  v.field("smooth_l1_beta", c.smooth_l1_beta);
  v.field("heatmap_sigma", c.heatmap_sigma);
  v.field("exec", c.exec);
}

template <class V>
void visit_fields(V& v, PretrainConfig& c) {
  v.field("steps", c.steps);
  v.field("scenes_per_step", c.scenes_per_step);
  v.field("learning_rate", c.learning_rate);
  v.field("beta1", c.beta1);
  v.field("beta2", c.beta2);
  v.field("epsilon", c.epsilon);
  v.field("seed", c.seed);
  v.field("init_seed", c.init_seed);
  v.field("augment", c.augment);
}

template <class V>
void visit_fields(V& v, RunConfig& c) {
  v.field("mode", c.mode);
  v.field("seed", c.seed);
  v.field("bank_size", c.bank_size);
  v.field("update_period", c.update_period);
  v.field("learning_rate", c.learning_rate);
  v.field("grad_clip", c.grad_clip);
  v.field("augment", c.augment);
  v.field("early_set_scenes", c.early_set_scenes);
  v.field("eval_iou", c.eval_iou);
  v.section("pseudo_label", [&](auto& s) {
    s.field("threshold", c.pseudo.threshold);
    s.field("ignore_floor", c.pseudo.ignore_floor);
    s.field("nms_iou", c.pseudo.nms_iou);
  });
  v.section("similarity", [&](auto& s) {
    s.field("featsim", c.feat.mode);
    s.field("rank_method", c.feat.rank_method);
    s.field("rank_tolerance", c.feat.rank_tolerance);
    s.field("center_features", c.feat.center_features);
    s.field("box_cost_mean", c.box.box_cost_mean);
    s.field("unmatched_cost", c.box.unmatched_cost);
  });
  v.section("detector", [&](auto& s) { visit_fields(s, c.detector); });
  v.section("stream", [&](auto& s) { visit_fields(s, c.stream); });
  v.section("pretrain", [&](auto& s) { visit_fields(s, c.pretrain); });
}

}  // namespace

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::mos_sw_first: return "mos_sw_first";
    case RunMode::mos_latest_first: return "mos_latest_first";
    case RunMode::mean_ensemble: return "mean_ensemble";
    case RunMode::no_ensemble: return "no_ensemble";
    case RunMode::no_adapt: return "no_adapt";
  }
  return "unknown";
}

RunMode parse_run_mode(std::string_view name) {
  return parse_named(name, {RunMode::mos_sw_first, RunMode::mos_latest_first, RunMode::mean_ensemble,
                            RunMode::no_ensemble, RunMode::no_adapt});
}

std::string_view to_string(FeatSimMode mode) { return mode == FeatSimMode::rank ? "rank" : "cosine"; }

FeatSimMode parse_featsim_mode(std::string_view name) {
  return parse_named(name, {FeatSimMode::rank, FeatSimMode::cosine});
}

void RunConfig::validate() const {
  if (bank_size < 1) fail("bank_size must be at least 1");
  if (update_period < 1) fail("update_period must be at least 1");
  if (!(pseudo.threshold > 0.0 && pseudo.threshold < 1.0)) fail("pseudo_label.threshold must be in (0,1)");
  if (!(pseudo.ignore_floor >= 0.0 && pseudo.ignore_floor <= pseudo.threshold))
    fail("pseudo_label.ignore_floor must be in [0, threshold]");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
  if (!(eval_iou > 0.0 && eval_iou <= 1.0)) fail("eval_iou must be in (0,1]");
  if (!(feat.rank_tolerance > 0.0 && feat.rank_tolerance < 1.0)) fail("similarity.rank_tolerance must be in (0,1)");
  if (!(box.unmatched_cost > 0.0)) fail("similarity.unmatched_cost must be positive");
  if (pretrain.scenes_per_step == 0) fail("pretrain.scenes_per_step must be positive");
  if (!(pretrain.learning_rate > 0.0)) fail("pretrain.learning_rate must be positive");
  detector.validate();
  stream.validate();
  if (stream.half_extent > detector.half_extent) fail("stream.half_extent exceeds the detector's range");
}

std::size_t RunConfig::early_set_batches() const {
  return (early_set_scenes + stream.scenes_per_batch - 1) / stream.scenes_per_batch;
}

RunConfig parse_run_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig config;
  Reader r(j, "config");
  visit_fields(r, config);
  r.finish();
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit_fields(w, copy);
  return w.j.dump(2);
}

std::string source_model_key(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit_fields(w, copy);
  json key;
  key["detector"] = w.j["detector"];
  key["detector"].erase("exec");
  key["stream"] = w.j["stream"];
  key["stream"].erase("target");
  key["stream"].erase("corruption_schedule");
  key["stream"].erase("corruption_segment");
  key["stream"].erase("batches");
  key["pretrain"] = w.j["pretrain"];
  return key.dump();
}

}  // namespace mos
