#pragma once

// Feature-level similarity between two checkpoints' feature maps on the same
// input: one minus the normalized rank of the stacked feature vectors.

#include <cstddef>
#include <span>
#include <vector>

#include "mos/numkernel.hpp"

namespace mos {

/// H x W x D tensor, stored height-major with depth innermost.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t depth = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t d)
      : height(h), width(w), depth(d), data(h * w * d, 0.0) {}

  std::size_t cells() const noexcept { return height * width; }
  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * depth + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * depth + c]; }

  /// (H*W) x D view of the map as a matrix.
  DenseMatrix flatten() const;
};

enum class FeatSimMode { rank, cosine };

inline constexpr double kFeatSimFloor = 0.01;

struct FeatSimOptions {
  FeatSimMode mode = FeatSimMode::rank;
  RankMethod rank_method = RankMethod::exact_svd;
  double rank_tolerance = kDefaultRankTolerance;
  bool center_features = true;
};

/// Row-wise concatenation [za; zb] as a 2HW x D matrix, optionally centered
/// by the mean feature vector of the stack.
DenseMatrix stack_features(const FeatureMap& za, const FeatureMap& zb, bool center);

/// Similarity in [0.01, 1]. Throws ShapeMismatch when the maps differ in shape.
double s_feat(const FeatureMap& za, const FeatureMap& zb, const FeatSimOptions& options = {});

}  // namespace mos
