#pragma once

// Detection metrics: greedy per-scene matching at a 3D IoU threshold and
// interpolated average precision over 40 recall positions.

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "mos/boxsim.hpp"

namespace mos {

inline constexpr std::size_t kRecallPositions = 40;
inline constexpr double kDefaultEvalIou = 0.7;

struct ScoredHit {
  double score = 0.0;
  bool true_positive = false;
};

/// Interpolated AP: mean over recall r = 1/40 .. 40/40 of the best precision
/// reached at recall >= r. Zero when there is no ground truth.
double average_precision(std::span<const ScoredHit> hits, std::size_t num_gt);

struct ClassMetrics {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double ap = 0.0;
};

struct EvalSummary {
  std::vector<ClassMetrics> classes;  ///< ascending class id
  double ap = 0.0;                    ///< mean AP over classes with ground truth
  double precision = 0.0;
  double recall = 0.0;
};

/// Accumulates matches over any number of scenes.
class EvalAccumulator {
 public:
  explicit EvalAccumulator(double iou_threshold = kDefaultEvalIou) : iou_threshold_(iou_threshold) {}

  /// Matches predictions (highest score first) to unmatched ground truth of
  /// the same class with the largest IoU at or above the threshold.
  void add_scene(const BoxSet& predictions, const BoxSet& ground_truth);
  void add(std::span<const BoxSet> predictions, std::span<const BoxSet> ground_truth);

  EvalSummary summary() const;
  double iou_threshold() const noexcept { return iou_threshold_; }

 private:
  struct Tally {
    std::vector<ScoredHit> hits;
    std::size_t num_gt = 0;
  };
  double iou_threshold_;
  std::map<int, Tally> tallies_;
};

EvalSummary evaluate(std::span<const BoxSet> predictions, std::span<const BoxSet> ground_truth,
                     double iou_threshold = kDefaultEvalIou);

}  // namespace mos
