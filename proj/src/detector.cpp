#include "mos/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mos/error.hpp"

namespace mos {

namespace {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double smooth_l1(double d, double beta, double& grad) {
  const double a = std::abs(d);
  if (a < beta) {
    grad = d / beta;
    return 0.5 * d * d / beta;
  }
  grad = d > 0 ? 1.0 : -1.0;
  return a - 0.5 * beta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void DetectorConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, "detector: " + what); };
  if (!(half_extent > 0.0)) fail("half_extent must be positive");
  if (grid == 0) fail("grid must be positive");
  if (layers.empty()) fail("at least one convolution layer is required");
  for (const auto& l : layers) {
    if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) fail("layer dimensions must be positive");
    if (l.kernel % 2 == 0) fail("kernel sizes must be odd");
  }
  if (!(prior_prob > 0.0 && prior_prob < 1.0)) fail("prior_prob must be in (0,1)");
  if (!(score_threshold > 0.0 && score_threshold < 1.0)) fail("score_threshold must be in (0,1)");
  if (!(smooth_l1_beta > 0.0)) fail("smooth_l1_beta must be positive");
  if (!(heatmap_sigma > 0.0)) fail("heatmap_sigma must be positive");
  for (double a : anchor_size)
    if (!(a > 0.0)) fail("anchor sizes must be positive");
}

std::size_t DetectorConfig::feature_grid() const {
  std::size_t g = grid;
  for (const auto& l : layers) g = (g + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1;
  return g;
}

// ---------------------------------------------------------------------------
// Pseudo labels and augmentation

bool PseudoLabelSet::empty() const noexcept {
  return std::all_of(labels.begin(), labels.end(), [](const BoxSet& b) { return b.empty(); });
}

std::vector<TrainTarget> PseudoLabelSet::targets() const {
  std::vector<TrainTarget> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i].labels = labels[i];
    if (i < ignored.size()) out[i].ignored = ignored[i];
  }
  return out;
}

PseudoLabelSet pseudo_label(std::span<const BoxSet> predictions, const PseudoLabelConfig& config) {
  PseudoLabelSet out;
  out.labels.resize(predictions.size());
  out.ignored.resize(predictions.size());
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    BoxSet confident;
    for (const auto& b : predictions[s]) {
      if (b.score >= config.threshold) confident.push_back(b);
      else if (b.score >= config.ignore_floor) out.ignored[s].push_back(b);
    }
    for (std::size_t idx : nms(confident, config.nms_iou)) out.labels[s].push_back(confident[idx]);
  }
  return out;
}

double sample_world_scale(AugmentStrength strength, std::mt19937_64& rng) {
  const double half = strength == AugmentStrength::strong ? 0.1 : 0.05;
  std::uniform_real_distribution<double> dist(1.0 - half, 1.0 + half);
  return dist(rng);
}

void scale_box(Box3D& box, double scale) {
  for (auto& c : box.center) c *= scale;
  for (auto& s : box.size) s *= scale;
}

void apply_world_scale(std::vector<PointCloud>& clouds, std::vector<TrainTarget>& targets, double scale) {
  if (scale == 1.0) return;
  for (auto& cloud : clouds)
    for (auto& p : cloud.points)
      for (auto& c : p) c = static_cast<float>(static_cast<double>(c) * scale);
  for (auto& t : targets) {
    for (auto& b : t.labels) scale_box(b, scale);
    for (auto& b : t.ignored) scale_box(b, scale);
  }
}

// ---------------------------------------------------------------------------
// Detector

struct Detector::Forward {
  std::vector<std::vector<double>> activations;  // [0] is the encoded input
  std::vector<std::vector<double>> pre;          // pre-ReLU outputs per layer
  std::vector<double> head;
};

Detector::Detector(DetectorConfig config) : config_(std::move(config)) {
  config_.validate();
  std::size_t in_c = kInputChannels, size = config_.grid, offset = 0;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& l = config_.layers[i];
    kernels::ConvShape s;
    s.in_h = s.in_w = size;
    s.in_c = in_c;
    s.out_c = l.out_channels;
    s.kernel = l.kernel;
    s.stride = l.stride;
    s.pad = l.kernel / 2;
    shapes_.push_back(s);
    layout_.push_back({"conv" + std::to_string(i) + ".weight",
                       {static_cast<std::uint32_t>(s.out_c), static_cast<std::uint32_t>(s.kernel),
                        static_cast<std::uint32_t>(s.kernel), static_cast<std::uint32_t>(s.in_c)}});
    weight_offsets_.push_back(offset);
    offset += s.weight_size();
    layout_.push_back({"conv" + std::to_string(i) + ".bias", {static_cast<std::uint32_t>(s.out_c)}});
    bias_offsets_.push_back(offset);
    offset += s.out_c;
    in_c = s.out_c;
    size = s.out_h();
  }
  kernels::ConvShape head;
  head.in_h = head.in_w = size;
  head.in_c = in_c;
  head.out_c = kHeadOutputs;
  head.kernel = 1;
  head.stride = 1;
  head.pad = 0;
  shapes_.push_back(head);
  layout_.push_back({"head.weight", {static_cast<std::uint32_t>(kHeadOutputs), static_cast<std::uint32_t>(in_c)}});
  head_weight_offset_ = offset;
  offset += kHeadOutputs * in_c;
  layout_.push_back({"head.bias", {static_cast<std::uint32_t>(kHeadOutputs)}});
  head_bias_offset_ = offset;
  offset += kHeadOutputs;
  num_params_ = offset;
  logit_offset_ = std::log(config_.prior_prob / (1.0 - config_.prior_prob));
}

ParamVector Detector::zero_params() const { return ParamVector(layout_); }

ParamVector Detector::init_params(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::vector<double> v(num_params_, 0.0);
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& s = shapes_[i];
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(s.kernel * s.kernel * s.in_c)));
    for (std::size_t j = 0; j < s.weight_size(); ++j) v[weight_offsets_[i] + j] = n(rng);
  }
  std::normal_distribution<double> head(0.0, 0.01);
  for (std::size_t j = 0; j < kHeadOutputs * shapes_.back().in_c; ++j) v[head_weight_offset_ + j] = head(rng);
  return ParamVector::from_double(layout_, v);
}

void Detector::check_layout(const ParamVector& params) const {
  if (params.layout() != layout_) throw Error(ErrorCode::LayoutMismatch, "parameters do not match detector architecture");
}

std::vector<double> Detector::encode(const PointCloud& cloud) const {
  const std::size_t g = config_.grid;
  const double cell = 2.0 * config_.half_extent / static_cast<double>(g);
  std::vector<double> count(g * g, 0.0), zmax(g * g, 0.0), zsum(g * g, 0.0);
  for (const auto& p : cloud.points) {
    const double x = p[0], y = p[1], z = p[2];
    if (z < -0.5 || z > 4.5) continue;
    const double fx = (x + config_.half_extent) / cell, fy = (y + config_.half_extent) / cell;
    if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(g) || fy >= static_cast<double>(g)) continue;
    const std::size_t idx = static_cast<std::size_t>(fy) * g + static_cast<std::size_t>(fx);
    zmax[idx] = count[idx] == 0.0 ? z : std::max(zmax[idx], z);
    count[idx] += 1.0;
    zsum[idx] += z;
  }
  std::vector<double> out(g * g * kInputChannels, 0.0);
  for (std::size_t i = 0; i < g * g; ++i) {
    if (count[i] == 0.0) continue;
    out[i * kInputChannels + 0] = std::log1p(count[i]) / 3.0;
    out[i * kInputChannels + 1] = zmax[i] / 2.0;
    out[i * kInputChannels + 2] = zsum[i] / count[i] / 2.0;
  }
  return out;
}

void Detector::forward(std::span<const double> params, const PointCloud& cloud, Forward& fwd) const {
  const std::size_t layers = config_.layers.size();
  fwd.activations.resize(layers + 1);
  fwd.pre.resize(layers);
  fwd.activations[0] = encode(cloud);
  for (std::size_t i = 0; i < layers; ++i) {
    const auto& s = shapes_[i];
    fwd.pre[i].assign(s.output_size(), 0.0);
    kernels::conv2d_forward(config_.exec, s, fwd.activations[i], params.subspan(weight_offsets_[i], s.weight_size()),
                            params.subspan(bias_offsets_[i], s.out_c), fwd.pre[i]);
    auto& act = fwd.activations[i + 1];
    act.resize(fwd.pre[i].size());
    std::transform(fwd.pre[i].begin(), fwd.pre[i].end(), act.begin(), [](double v) { return v > 0.0 ? v : 0.0; });
  }
  const auto& h = shapes_.back();
  fwd.head.assign(h.output_size(), 0.0);
  kernels::conv2d_forward(config_.exec, h, fwd.activations[layers],
                          params.subspan(head_weight_offset_, h.weight_size()),
                          params.subspan(head_bias_offset_, kHeadOutputs), fwd.head);
}

BoxSet Detector::decode(std::span<const double> head) const {
  const std::size_t fg = config_.feature_grid();
  const double cell = 2.0 * config_.half_extent / static_cast<double>(fg);
  const auto& anchor = config_.anchor_size;
  BoxSet candidates;
  for (std::size_t iy = 0; iy < fg; ++iy)
    for (std::size_t ix = 0; ix < fg; ++ix) {
      const double* o = head.data() + (iy * fg + ix) * kHeadOutputs;
      const double score = sigmoid(o[0] + logit_offset_);
      if (!(score > config_.score_threshold)) continue;
      Box3D b;
      b.center = {-config_.half_extent + (static_cast<double>(ix) + 0.5 + o[1]) * cell,
                  -config_.half_extent + (static_cast<double>(iy) + 0.5 + o[2]) * cell, 0.5 * anchor[2] + o[3]};
      b.size = {anchor[0] * std::exp(std::clamp(o[4], -3.0, 3.0)), anchor[1] * std::exp(std::clamp(o[5], -3.0, 3.0)),
                anchor[2] * std::exp(std::clamp(o[6], -3.0, 3.0))};
      b.yaw = wrap_angle(0.5 * std::atan2(o[7], o[8]));
      b.class_id = 0;
      b.score = score;
      candidates.push_back(b);
    }
  BoxSet out;
  for (std::size_t idx : nms(candidates, config_.nms_iou)) {
    if (out.size() >= config_.max_detections) break;
    out.push_back(candidates[idx]);
  }
  return out;
}

SceneOutput Detector::infer_scene(const ParamVector& params, const PointCloud& cloud) const {
  check_layout(params);
  const auto p = params.to_double();
  Forward fwd;
  forward(p, cloud, fwd);
  SceneOutput out;
  const std::size_t fg = config_.feature_grid();
  out.features = FeatureMap(fg, fg, config_.feature_depth());
  out.features.data = std::move(fwd.activations.back());
  out.boxes = decode(fwd.head);
  return out;
}

std::vector<SceneOutput> Detector::infer(const ParamVector& params, std::span<const PointCloud> clouds) const {
  check_layout(params);
  const auto p = params.to_double();
  const std::size_t fg = config_.feature_grid();
  std::vector<SceneOutput> out(clouds.size());
  for (std::size_t s = 0; s < clouds.size(); ++s) {
    Forward fwd;
    forward(p, clouds[s], fwd);
    out[s].features = FeatureMap(fg, fg, config_.feature_depth());
    out[s].features.data = std::move(fwd.activations.back());
    out[s].boxes = decode(fwd.head);
  }
  return out;
}

LossBreakdown Detector::loss_and_grad(std::span<const double> params, std::span<const PointCloud> clouds,
                                      std::span<const TrainTarget> targets, std::span<double> grad) const {
  if (params.size() != num_params_) throw Error(ErrorCode::LayoutMismatch, "parameter count mismatch");
  if (targets.size() != clouds.size()) throw Error(ErrorCode::ShapeMismatch, "one target per scene required");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != num_params_) throw Error(ErrorCode::LayoutMismatch, "gradient size mismatch");
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  const std::size_t fg = config_.feature_grid();
  const std::size_t cells = fg * fg;
  const double cell = 2.0 * config_.half_extent / static_cast<double>(fg);
  const auto& anchor = config_.anchor_size;
  const double alpha = config_.focal_alpha, gamma = config_.focal_gamma;

  auto cell_of = [&](const Box3D& b, std::size_t& idx) {
    const double fx = (b.center[0] + config_.half_extent) / cell;
    const double fy = (b.center[1] + config_.half_extent) / cell;
    if (!(fx >= 0.0 && fy >= 0.0 && fx < static_cast<double>(fg) && fy < static_cast<double>(fg))) return false;
    idx = static_cast<std::size_t>(fy) * fg + static_cast<std::size_t>(fx);
    return true;
  };

  // Cell roles: 0 negative, 1 positive, 2 ignored. Negatives near a target
  // center are down-weighted by (1 - h)^4 with h a Gaussian of the distance
  // in cells, so the objectness peak sits on the center cell.
  std::vector<std::vector<std::uint8_t>> role(clouds.size(), std::vector<std::uint8_t>(cells, 0));
  std::vector<std::vector<const Box3D*>> assigned(clouds.size(), std::vector<const Box3D*>(cells, nullptr));
  std::vector<std::vector<double>> neg_weight(clouds.size(), std::vector<double>(cells, 1.0));
  const double inv_two_sigma2 = 1.0 / (2.0 * config_.heatmap_sigma * config_.heatmap_sigma);
  std::size_t positives = 0;
  for (std::size_t s = 0; s < clouds.size(); ++s) {
    auto splat = [&](const Box3D& b) {
      const double fx = (b.center[0] + config_.half_extent) / cell, fy = (b.center[1] + config_.half_extent) / cell;
      const auto lo = [&](double f) { return static_cast<std::size_t>(std::clamp(std::floor(f) - 2.0, 0.0, static_cast<double>(fg - 1))); };
      const auto hi = [&](double f) { return static_cast<std::size_t>(std::clamp(std::floor(f) + 2.0, 0.0, static_cast<double>(fg - 1))); };
      if (fx < -2.0 || fy < -2.0 || fx > fg + 2.0 || fy > fg + 2.0) return;
      for (std::size_t iy = lo(fy); iy <= hi(fy); ++iy)
        for (std::size_t ix = lo(fx); ix <= hi(fx); ++ix) {
          const double dx = static_cast<double>(ix) + 0.5 - fx, dy = static_cast<double>(iy) + 0.5 - fy;
          const double w = std::pow(1.0 - std::exp(-(dx * dx + dy * dy) * inv_two_sigma2), 4.0);
          auto& nw = neg_weight[s][iy * fg + ix];
          nw = std::min(nw, w);
        }
    };
    for (const auto& b : targets[s].labels) {
      splat(b);
      std::size_t idx = 0;
      if (!cell_of(b, idx) || role[s][idx] == 1) continue;
      role[s][idx] = 1;
      assigned[s][idx] = &b;
      ++positives;
    }
    for (const auto& b : targets[s].ignored) {
      splat(b);
      std::size_t idx = 0;
      if (cell_of(b, idx) && role[s][idx] == 0) role[s][idx] = 2;
    }
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives));

  LossBreakdown out;
  out.positives = positives;
  Forward fwd;
  std::vector<double> dhead(cells * kHeadOutputs), dact, dprev, gw, gb;
  for (std::size_t s = 0; s < clouds.size(); ++s) {
    forward(params, clouds[s], fwd);
    std::fill(dhead.begin(), dhead.end(), 0.0);
    for (std::size_t idx = 0; idx < cells; ++idx) {
      const double* o = fwd.head.data() + idx * kHeadOutputs;
      double* d = dhead.data() + idx * kHeadOutputs;
      const double z = o[0] + logit_offset_;
      const double p = sigmoid(z);
      if (role[s][idx] == 1) {
        const double w = alpha * std::pow(1.0 - p, gamma);
        out.classification += w * softplus(-z);
        d[0] = norm * w * (-gamma * p * softplus(-z) - (1.0 - p));
      } else if (role[s][idx] == 0) {
        const double w = (1.0 - alpha) * std::pow(p, gamma) * neg_weight[s][idx];
        out.classification += w * softplus(z);
        d[0] = norm * w * (p + gamma * (1.0 - p) * softplus(z));
      }
      if (const Box3D* bp = assigned[s][idx]) {
        const Box3D& b = *bp;
        const std::size_t iy = idx / fg, ix = idx % fg;
        const double t[8] = {(b.center[0] + config_.half_extent) / cell - (static_cast<double>(ix) + 0.5),
                             (b.center[1] + config_.half_extent) / cell - (static_cast<double>(iy) + 0.5),
                             b.center[2] - 0.5 * anchor[2],
                             std::log(b.size[0] / anchor[0]),
                             std::log(b.size[1] / anchor[1]),
                             std::log(b.size[2] / anchor[2]),
                             std::sin(2.0 * b.yaw),
                             std::cos(2.0 * b.yaw)};
        for (std::size_t k = 0; k < 8; ++k) {
          double g = 0.0;
          out.regression += smooth_l1(o[k + 1] - t[k], config_.smooth_l1_beta, g);
          d[k + 1] = norm * config_.reg_weight * g;
        }
      }
    }
    if (!want_grad) continue;

    // Head (1x1 conv) then the conv stack in reverse.
    const std::size_t layers = config_.layers.size();
    const auto& hs = shapes_.back();
    gw.assign(hs.weight_size(), 0.0);
    gb.assign(hs.out_c, 0.0);
    kernels::conv2d_backward_weights(config_.exec, hs, fwd.activations[layers], dhead, gw, gb);
    for (std::size_t j = 0; j < gw.size(); ++j) grad[head_weight_offset_ + j] += gw[j];
    for (std::size_t j = 0; j < gb.size(); ++j) grad[head_bias_offset_ + j] += gb[j];
    dact.assign(hs.input_size(), 0.0);
    kernels::conv2d_backward_input(config_.exec, hs, params.subspan(head_weight_offset_, hs.weight_size()), dhead,
                                   dact);
    for (std::size_t li = layers; li-- > 0;) {
      const auto& cs = shapes_[li];
      for (std::size_t j = 0; j < dact.size(); ++j)
        if (fwd.pre[li][j] <= 0.0) dact[j] = 0.0;
      gw.assign(cs.weight_size(), 0.0);
      gb.assign(cs.out_c, 0.0);
      kernels::conv2d_backward_weights(config_.exec, cs, fwd.activations[li], dact, gw, gb);
      for (std::size_t j = 0; j < gw.size(); ++j) grad[weight_offsets_[li] + j] += gw[j];
      for (std::size_t j = 0; j < gb.size(); ++j) grad[bias_offsets_[li] + j] += gb[j];
      if (li == 0) break;
      dprev.assign(cs.input_size(), 0.0);
      kernels::conv2d_backward_input(config_.exec, cs, params.subspan(weight_offsets_[li], cs.weight_size()), dact,
                                     dprev);
      dact.swap(dprev);
    }
  }
  out.classification *= norm;
  out.regression *= norm * config_.reg_weight;
  out.total = out.classification + out.regression;
  return out;
}

ParamVector Detector::train_step(const ParamVector& params, std::span<const PointCloud> clouds,
                                 std::span<const TrainTarget> targets, double learning_rate,
                                 double grad_clip_norm) const {
  check_layout(params);
  const bool any_label =
      std::any_of(targets.begin(), targets.end(), [](const TrainTarget& t) { return !t.labels.empty(); });
  if (!any_label || learning_rate == 0.0) return params;
  auto p = params.to_double();
  std::vector<double> g(num_params_);
  const auto loss = loss_and_grad(p, clouds, targets, g);
  double norm2 = 0.0;
  for (double v : g) norm2 += v * v;
  if (!std::isfinite(loss.total) || !std::isfinite(norm2))
    throw Error(ErrorCode::TrainingDiverged, "non-finite loss or gradient");
  double scale = learning_rate;
  if (grad_clip_norm > 0.0 && norm2 > grad_clip_norm * grad_clip_norm) scale *= grad_clip_norm / std::sqrt(norm2);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= scale * g[i];
  auto next = ParamVector::from_double(layout_, p);
  if (!next.all_finite()) throw Error(ErrorCode::TrainingDiverged, "non-finite parameters after step");
  return next;
}

}  // namespace mos
