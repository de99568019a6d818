#include "mos/featsim.hpp"

#include <algorithm>
#include <cmath>

#include "mos/error.hpp"

namespace mos {

namespace {

void require_same_shape(const FeatureMap& a, const FeatureMap& b) {
  if (a.height != b.height || a.width != b.width || a.depth != b.depth)
    throw Error(ErrorCode::ShapeMismatch, "feature maps differ in shape");
  if (a.depth == 0) throw Error(ErrorCode::ShapeMismatch, "feature depth must be at least 1");
  if (a.data.size() != a.cells() * a.depth || b.data.size() != b.cells() * b.depth)
    throw Error(ErrorCode::ShapeMismatch, "feature data length does not match shape");
}

double cosine_similarity(const FeatureMap& za, const FeatureMap& zb) {
  const std::size_t d = za.depth;
  double sum = 0.0;
  for (std::size_t cell = 0; cell < za.cells(); ++cell) {
    const double* a = za.data.data() + cell * d;
    const double* b = zb.data.data() + cell * d;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += a[c] * b[c];
      na += a[c] * a[c];
      nb += b[c] * b[c];
    }
    if (na == 0.0 && nb == 0.0) sum += 1.0;
    else if (na > 0.0 && nb > 0.0) sum += dot / std::sqrt(na * nb);
  }
  const double mean = za.cells() ? sum / static_cast<double>(za.cells()) : 1.0;
  return 0.5 * (1.0 + mean);
}

}  // namespace

DenseMatrix FeatureMap::flatten() const { return DenseMatrix(cells(), depth, data); }

DenseMatrix stack_features(const FeatureMap& za, const FeatureMap& zb, bool center) {
  require_same_shape(za, zb);
  const std::size_t n = za.cells(), d = za.depth;
  DenseMatrix m(2 * n, d);
  std::copy(za.data.begin(), za.data.end(), m.data().begin());
  std::copy(zb.data.begin(), zb.data.end(), m.data().begin() + static_cast<std::ptrdiff_t>(n * d));
  if (center) {
    // Mean of the two halves' means, so the result does not depend on the
    // order of the arguments.
    std::vector<double> mean_a(d, 0.0), mean_b(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        mean_a[c] += m(r, c);
        mean_b[c] += m(n + r, c);
      }
    for (std::size_t c = 0; c < d; ++c) {
      const double mu = 0.5 * (mean_a[c] + mean_b[c]) / static_cast<double>(n);
      for (std::size_t r = 0; r < 2 * n; ++r) m(r, c) -= mu;
    }
  }
  return m;
}

double s_feat(const FeatureMap& za, const FeatureMap& zb, const FeatSimOptions& options) {
  require_same_shape(za, zb);
  if (options.mode == FeatSimMode::cosine) {
    if (!std::all_of(za.data.begin(), za.data.end(), [](double v) { return std::isfinite(v); }) ||
        !std::all_of(zb.data.begin(), zb.data.end(), [](double v) { return std::isfinite(v); }))
      throw Error(ErrorCode::InvalidMatrix, "non-finite feature value");
    return std::max(cosine_similarity(za, zb), kFeatSimFloor);
  }
  // rank([a; b]) == rank([b; a]); a canonical stacking order makes the
  // numerical result symmetric as well.
  const bool swap = zb.data < za.data;
  const DenseMatrix stacked = swap ? stack_features(zb, za, options.center_features)
                                   : stack_features(za, zb, options.center_features);
  const double rank = rank_estimate(stacked, options.rank_method, options.rank_tolerance);
  const double depth = static_cast<double>(za.depth);
  if (rank >= depth) return kFeatSimFloor;
  return std::max(1.0 - rank / depth, kFeatSimFloor);
}

}  // namespace mos
