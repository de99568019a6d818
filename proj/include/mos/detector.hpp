#pragma once

// A small dense BEV detector: occupancy-grid encoding, a stack of strided
// 3x3 convolutions with ReLU, and a per-cell 1x1 head producing an objectness
// logit plus eight box-regression channels. It exposes exactly what model
// synergy needs from a backbone: a flat parameter vector, a feature map per
// scene, scored boxes, and a hand-derived gradient for single-step training.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mos/boxsim.hpp"
#include "mos/featsim.hpp"
#include "mos/kernels.hpp"
#include "mos/params.hpp"
#include "mos/simstream.hpp"

namespace mos {

struct ConvLayerConfig {
  std::size_t out_channels = 16;
  std::size_t kernel = 3;
  std::size_t stride = 1;
};

inline constexpr std::size_t kInputChannels = 3;   // log-count, max height, mean height
inline constexpr std::size_t kHeadOutputs = 9;     // objectness + 8 regression channels

struct DetectorConfig {
  double half_extent = 16.0;  ///< BEV region is [-half_extent, half_extent]^2
  std::size_t grid = 64;      ///< input cells per side
  std::vector<ConvLayerConfig> layers = {{12, 3, 2}, {16, 3, 1}, {16, 3, 1}, {16, 3, 1}};
  double prior_prob = 0.01;   ///< fixed objectness prior folded into the logit
  double score_threshold = 0.1;
  double nms_iou = 0.1;
  std::size_t max_detections = 64;
  std::array<double, 3> anchor_size = {3.9, 1.6, 1.5};
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double reg_weight = 2.0;
  double smooth_l1_beta = 0.1;
  double heatmap_sigma = 0.75;  ///< cells; softens negatives around target centers
  Exec exec = Exec::parallel;

  void validate() const;
  std::size_t feature_grid() const;
  std::size_t feature_depth() const { return layers.back().out_channels; }
};

/// Per-scene output of a forward pass.
struct SceneOutput {
  FeatureMap features;
  BoxSet boxes;  ///< sorted by descending score
};

/// Training targets for one scene: boxes to regress and boxes whose cells are
/// left out of the objectness loss.
struct TrainTarget {
  BoxSet labels;
  BoxSet ignored;
};

struct PseudoLabelConfig {
  double threshold = 0.6;    ///< keep boxes scoring at least this
  double ignore_floor = 0.1;   ///< boxes in [ignore_floor, threshold) are ignored, not negatives
  double nms_iou = 0.3;
};

struct PseudoLabelSet {
  std::vector<BoxSet> labels;
  std::vector<BoxSet> ignored;

  bool empty() const noexcept;
  std::vector<TrainTarget> targets() const;
};

PseudoLabelSet pseudo_label(std::span<const BoxSet> predictions, const PseudoLabelConfig& config);

enum class AugmentStrength { strong, weak };

/// Uniform world-scale factor: [0.9, 1.1] strong, [0.95, 1.05] weak.
double sample_world_scale(AugmentStrength strength, std::mt19937_64& rng);

/// Multiplies every point coordinate and box center/size by `scale`; yaw is
/// left unchanged.
void apply_world_scale(std::vector<PointCloud>& clouds, std::vector<TrainTarget>& targets, double scale);
void scale_box(Box3D& box, double scale);

struct LossBreakdown {
  double total = 0.0;
  double classification = 0.0;
  double regression = 0.0;
  std::size_t positives = 0;
};

class Detector {
 public:
  explicit Detector(DetectorConfig config);

  const DetectorConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t num_params() const noexcept { return num_params_; }

  ParamVector zero_params() const;
  /// He-normal convolution weights, small head weights, zero biases.
  ParamVector init_params(std::uint64_t seed) const;

  /// Rasterized BEV input for a cloud (grid x grid x kInputChannels).
  std::vector<double> encode(const PointCloud& cloud) const;

  SceneOutput infer_scene(const ParamVector& params, const PointCloud& cloud) const;
  std::vector<SceneOutput> infer(const ParamVector& params, std::span<const PointCloud> clouds) const;

  /// Batch loss; writes d(loss)/d(params) into `grad` when it is non-empty.
  LossBreakdown loss_and_grad(std::span<const double> params, std::span<const PointCloud> clouds,
                              std::span<const TrainTarget> targets, std::span<double> grad) const;

  /// One plain gradient-descent step. Returns `params` unchanged when no scene
  /// has a label; throws TrainingDiverged when the loss or gradient is not finite.
  ParamVector train_step(const ParamVector& params, std::span<const PointCloud> clouds,
                         std::span<const TrainTarget> targets, double learning_rate,
                         double grad_clip_norm = 0.0) const;

  /// Decodes a head output (feature_grid^2 x kHeadOutputs) into scored boxes.
  BoxSet decode(std::span<const double> head) const;

 private:
  struct Forward;
  void forward(std::span<const double> params, const PointCloud& cloud, Forward& fwd) const;
  void check_layout(const ParamVector& params) const;

  DetectorConfig config_;
  ParamLayout layout_;
  std::size_t num_params_ = 0;
  std::vector<kernels::ConvShape> shapes_;
  std::vector<std::size_t> weight_offsets_, bias_offsets_;
  std::size_t head_weight_offset_ = 0, head_bias_offset_ = 0;
  double logit_offset_ = 0.0;
};

}  // namespace mos
