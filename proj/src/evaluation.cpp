#include "mos/evaluation.hpp"

#include <algorithm>
#include <numeric>

#include "mos/error.hpp"

namespace mos {

double average_precision(std::span<const ScoredHit> hits, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  std::vector<ScoredHit> sorted(hits.begin(), hits.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredHit& a, const ScoredHit& b) { return a.score > b.score; });
  // best[i]: max precision over ranks whose recall reaches position i+1.
  std::vector<double> best(kRecallPositions, 0.0);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    if (!sorted[k].true_positive) continue;
    ++tp;
    const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    // Recall tp/num_gt >= i/40 exactly when 40*tp >= i*num_gt.
    for (std::size_t i = 1; i <= kRecallPositions; ++i)
      if (kRecallPositions * tp >= i * num_gt) best[i - 1] = std::max(best[i - 1], precision);
  }
  return std::accumulate(best.begin(), best.end(), 0.0) / static_cast<double>(kRecallPositions);
}

void EvalAccumulator::add_scene(const BoxSet& predictions, const BoxSet& ground_truth) {
  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<bool> taken(ground_truth.size(), false);
  for (const auto& g : ground_truth) ++tallies_[g.class_id].num_gt;
  for (std::size_t idx : order) {
    const Box3D& p = predictions[idx];
    std::ptrdiff_t match = -1;
    double best_iou = iou_threshold_;
    for (std::size_t j = 0; j < ground_truth.size(); ++j) {
      if (taken[j] || ground_truth[j].class_id != p.class_id) continue;
      const double iou = box_iou(p, ground_truth[j]);
      if (iou >= best_iou && (match < 0 || iou > best_iou)) {
        best_iou = iou;
        match = static_cast<std::ptrdiff_t>(j);
      }
    }
    if (match >= 0) taken[static_cast<std::size_t>(match)] = true;
    tallies_[p.class_id].hits.push_back({p.score, match >= 0});
  }
}

void EvalAccumulator::add(std::span<const BoxSet> predictions, std::span<const BoxSet> ground_truth) {
  if (predictions.size() != ground_truth.size())
    throw Error(ErrorCode::ShapeMismatch, "one prediction set per ground-truth scene required");
  for (std::size_t s = 0; s < predictions.size(); ++s) add_scene(predictions[s], ground_truth[s]);
}

EvalSummary EvalAccumulator::summary() const {
  EvalSummary out;
  std::size_t tp_all = 0, fp_all = 0, gt_all = 0, classes_with_gt = 0;
  double ap_sum = 0.0;
  for (const auto& [cls, tally] : tallies_) {
    ClassMetrics m;
    m.class_id = cls;
    m.num_gt = tally.num_gt;
    for (const auto& h : tally.hits) (h.true_positive ? m.true_positives : m.false_positives)++;
    const std::size_t predicted = m.true_positives + m.false_positives;
    m.precision = predicted ? static_cast<double>(m.true_positives) / static_cast<double>(predicted) : 0.0;
    m.recall = m.num_gt ? static_cast<double>(m.true_positives) / static_cast<double>(m.num_gt) : 0.0;
    m.ap = average_precision(tally.hits, tally.num_gt);
    if (m.num_gt > 0) {
      ap_sum += m.ap;
      ++classes_with_gt;
    }
    tp_all += m.true_positives;
    fp_all += m.false_positives;
    gt_all += m.num_gt;
    out.classes.push_back(m);
  }
  out.ap = classes_with_gt ? ap_sum / static_cast<double>(classes_with_gt) : 0.0;
  out.precision = tp_all + fp_all ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all) : 0.0;
  out.recall = gt_all ? static_cast<double>(tp_all) / static_cast<double>(gt_all) : 0.0;
  return out;
}

EvalSummary evaluate(std::span<const BoxSet> predictions, std::span<const BoxSet> ground_truth,
                     double iou_threshold) {
  EvalAccumulator acc(iou_threshold);
  acc.add(predictions, ground_truth);
  return acc.summary();
}

}  // namespace mos
