#pragma once

// Dense linear-algebra primitives: SVD, rank estimation, nuclear norm and the
// ridge-escalated symmetric solve against the all-ones vector.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mos {

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SvdResult {
  std::vector<double> singular_values;  // descending, non-negative
  DenseMatrix u;                        // rows x k
  DenseMatrix v;                        // cols x k
};

/// Thin SVD, k = min(rows, cols). Throws InvalidMatrix on non-finite input.
SvdResult svd(const DenseMatrix& m);

/// Singular values only, descending.
std::vector<double> singular_values(const DenseMatrix& m);

enum class RankMethod {
  exact_svd,     ///< count of sigma_i > rel_tol * sigma_1
  nuclear_norm,  ///< stable-rank proxy ||m||_* / sigma_1
};

inline constexpr double kDefaultRankTolerance = 1e-3;

/// |{i : sigma_i > rel_tol * sigma_1}|; 0 for the zero matrix.
std::size_t effective_rank(const DenseMatrix& m, double rel_tol = kDefaultRankTolerance);

/// Real-valued rank estimate under either method. For exact_svd this is
/// effective_rank converted to double.
double rank_estimate(const DenseMatrix& m, RankMethod method,
                     double rel_tol = kDefaultRankTolerance);

double nuclear_norm(const DenseMatrix& m);

struct RidgeSolve {
  std::vector<double> x;
  double ridge = 0.0;  ///< ridge actually applied
  int escalations = 0;
};

inline constexpr double kMaxConditionEstimate = 1e10;
inline constexpr int kMaxRidgeDoublings = 8;

/// Solves (g + ridge I) x = 1. When the condition estimate exceeds
/// kMaxConditionEstimate the ridge is reset to 1e-6 * trace(g) / K and
/// doubled up to kMaxRidgeDoublings times before throwing SingularGram.
RidgeSolve regularized_solve_ones(const DenseMatrix& g, double ridge = 0.0);

}  // namespace mos
