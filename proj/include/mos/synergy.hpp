#pragma once

// Generalized Gram matrix over the bank's outputs on one batch, the synergy
// weights G^-1 1 (projected onto the simplex), and parameter assembly of the
// super model.

#include <functional>
#include <span>
#include <vector>

#include "mos/boxsim.hpp"
#include "mos/detector.hpp"
#include "mos/featsim.hpp"
#include "mos/kernels.hpp"
#include "mos/numkernel.hpp"
#include "mos/params.hpp"

namespace mos {

struct GramMatrix {
  DenseMatrix entries;  // K x K, symmetric, entries in (0, 1]
  std::size_t k() const noexcept { return entries.rows(); }
};

struct SynergyWeights {
  std::vector<double> weights;  ///< non-negative, sums to 1
  std::vector<double> raw;      ///< G^-1 1 before projection
  double ridge = 0.0;           ///< ridge used by the solve
  bool fell_back_to_uniform = false;
};

struct SimilarityOptions {
  FeatSimOptions feat{};
  BoxSimOptions box{};
};

/// Outputs of one checkpoint on every scene of the current batch.
using CheckpointOutputs = std::vector<SceneOutput>;

/// Mean over scenes of s_box * s_feat for one pair. Box similarity is taken
/// per class and averaged over the classes present in either set.
double pair_similarity(const CheckpointOutputs& a, const CheckpointOutputs& b, const SimilarityOptions& options);

GramMatrix gram_matrix(std::span<const CheckpointOutputs> outputs, const SimilarityOptions& options = {},
                       Exec exec = Exec::parallel);

SynergyWeights synergy_weights(const GramMatrix& g);

SynergyWeights uniform_weights(std::size_t k);

/// f* = sum_i w_i f_i over every stored value; layouts must match.
ParamVector assemble(std::span<const ParamVector> checkpoints, std::span<const double> weights,
                     Exec exec = Exec::parallel);

/// Same as assemble, but checkpoints are produced one at a time by `load`
/// so that at most one is resident besides the accumulator.
ParamVector assemble_sequential(std::size_t count, const std::function<ParamVector(std::size_t)>& load,
                                std::span<const double> weights);

}  // namespace mos
