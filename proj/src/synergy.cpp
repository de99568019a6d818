#include "mos/synergy.hpp"

#include <algorithm>
#include <set>

#include "mos/error.hpp"

namespace mos {

namespace {

BoxSet of_class(const BoxSet& boxes, int class_id) {
  BoxSet out;
  for (const auto& b : boxes)
    if (b.class_id == class_id) out.push_back(b);
  return out;
}

double scene_box_similarity(const BoxSet& a, const BoxSet& b, const BoxSimOptions& options) {
  std::set<int> classes;
  for (const auto& x : a) classes.insert(x.class_id);
  for (const auto& x : b) classes.insert(x.class_id);
  if (classes.size() <= 1) return s_box(a, b, options);
  double sum = 0.0;
  for (int c : classes) sum += s_box(of_class(a, c), of_class(b, c), options);
  return sum / static_cast<double>(classes.size());
}

bool exchangeable(const DenseMatrix& g) {
  const std::size_t k = g.rows();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (g(i, j) != (i == j ? g(0, 0) : g(0, k > 1 ? 1 : 0))) return false;
  return true;
}

}  // namespace

double pair_similarity(const CheckpointOutputs& a, const CheckpointOutputs& b, const SimilarityOptions& options) {
  if (a.size() != b.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoints saw different scene counts");
  if (a.empty()) return 1.0;
  double sum = 0.0;
  for (std::size_t s = 0; s < a.size(); ++s)
    sum += scene_box_similarity(a[s].boxes, b[s].boxes, options.box) *
           s_feat(a[s].features, b[s].features, options.feat);
  return sum / static_cast<double>(a.size());
}

GramMatrix gram_matrix(std::span<const CheckpointOutputs> outputs, const SimilarityOptions& options, Exec exec) {
  const std::size_t k = outputs.size();
  GramMatrix g{DenseMatrix(k, k)};
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) pairs.emplace_back(i, j);
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
  if (exec == Exec::serial) {
    for (std::ptrdiff_t p = 0; p < n; ++p) {
      const auto [i, j] = pairs[static_cast<std::size_t>(p)];
      g.entries(i, j) = g.entries(j, i) = pair_similarity(outputs[i], outputs[j], options);
    }
  } else {
    // Each pair writes its own two cells; exceptions are carried out of the
    // parallel region and rethrown.
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t p = 0; p < n; ++p) {
      try {
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        const double v = pair_similarity(outputs[i], outputs[j], options);
        g.entries(i, j) = v;
        g.entries(j, i) = v;
      } catch (...) {
#pragma omp critical(mos_gram_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  return g;
}

SynergyWeights uniform_weights(std::size_t k) {
  SynergyWeights w;
  w.weights.assign(k, k ? 1.0 / static_cast<double>(k) : 0.0);
  w.raw = w.weights;
  return w;
}

SynergyWeights synergy_weights(const GramMatrix& g) {
  const auto solve = regularized_solve_ones(g.entries);
  SynergyWeights w;
  w.raw = solve.x;
  w.ridge = solve.ridge;
  // Equal diagonal and equal off-diagonal entries: every checkpoint is
  // interchangeable, so the exact answer is uniform regardless of rounding.
  if (exchangeable(g.entries)) {
    w.weights.assign(w.raw.size(), 1.0 / static_cast<double>(w.raw.size()));
    return w;
  }
  w.weights.resize(w.raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.raw.size(); ++i) {
    w.weights[i] = std::max(0.0, w.raw[i]);
    sum += w.weights[i];
  }
  if (!(sum > 0.0)) {
    auto u = uniform_weights(w.raw.size());
    u.raw = w.raw;
    u.ridge = w.ridge;
    u.fell_back_to_uniform = true;
    return u;
  }
  for (auto& v : w.weights) v /= sum;
  return w;
}

ParamVector assemble(std::span<const ParamVector> checkpoints, std::span<const double> weights, Exec exec) {
  if (checkpoints.empty()) throw Error(ErrorCode::LayoutMismatch, "cannot assemble an empty bank");
  if (weights.size() != checkpoints.size())
    throw Error(ErrorCode::LayoutMismatch, "one weight per checkpoint required");
  for (const auto& c : checkpoints) require_same_layout(checkpoints.front(), c);
  std::vector<std::span<const float>> sources;
  sources.reserve(checkpoints.size());
  for (const auto& c : checkpoints) sources.push_back(c.values());
  ParamVector out(checkpoints.front().layout());
  kernels::weighted_sum(exec, sources, weights, out.values());
  return out;
}

ParamVector assemble_sequential(std::size_t count, const std::function<ParamVector(std::size_t)>& load,
                                std::span<const double> weights) {
  if (count == 0) throw Error(ErrorCode::LayoutMismatch, "cannot assemble an empty bank");
  if (weights.size() != count) throw Error(ErrorCode::LayoutMismatch, "one weight per checkpoint required");
  ParamVector first = load(0);
  std::vector<double> acc(first.size());
  for (std::size_t p = 0; p < acc.size(); ++p) acc[p] = weights[0] * static_cast<double>(first.values()[p]);
  const ParamLayout layout = first.layout();
  for (std::size_t i = 1; i < count; ++i) {
    const ParamVector next = load(i);
    if (next.layout() != layout) throw Error(ErrorCode::LayoutMismatch, "parameter manifests differ");
    for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += weights[i] * static_cast<double>(next.values()[p]);
  }
  return ParamVector::from_double(layout, acc);
}

}  // namespace mos
