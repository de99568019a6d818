#include "mos/numkernel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "mos/error.hpp"

namespace mos {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajorMatrix> as_eigen(const DenseMatrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

void require_finite(const DenseMatrix& m, const char* what) {
  if (!m.all_finite()) throw Error(ErrorCode::InvalidMatrix, std::string(what) + ": non-finite entry");
}

DenseMatrix from_eigen(const Eigen::MatrixXd& e) {
  DenseMatrix out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  for (Eigen::Index r = 0; r < e.rows(); ++r)
    for (Eigen::Index c = 0; c < e.cols(); ++c) out(r, c) = e(r, c);
  return out;
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw Error(ErrorCode::InvalidMatrix, "data length does not match rows x cols");
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::InvalidMatrix, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

SvdResult svd(const DenseMatrix& m) {
  require_finite(m, "svd");
  if (m.rows() == 0 || m.cols() == 0) throw Error(ErrorCode::InvalidMatrix, "svd of empty matrix");
  Eigen::MatrixXd e = as_eigen(m);
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> solver(
      e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResult out;
  const auto& s = solver.singularValues();
  out.singular_values.assign(s.data(), s.data() + s.size());
  out.u = from_eigen(solver.matrixU());
  out.v = from_eigen(solver.matrixV());
  return out;
}

std::vector<double> singular_values(const DenseMatrix& m) {
  require_finite(m, "singular_values");
  if (m.rows() == 0 || m.cols() == 0) return {};
  Eigen::MatrixXd e = as_eigen(m);
  Eigen::JacobiSVD<Eigen::MatrixXd, Eigen::ColPivHouseholderQRPreconditioner> solver(e);
  const auto& s = solver.singularValues();
  return {s.data(), s.data() + s.size()};
}

std::size_t effective_rank(const DenseMatrix& m, double rel_tol) {
  const auto sigma = singular_values(m);
  if (sigma.empty() || sigma.front() <= 0.0) return 0;
  const double cut = rel_tol * sigma.front();
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [cut](double s) { return s > cut; }));
}

double rank_estimate(const DenseMatrix& m, RankMethod method, double rel_tol) {
  if (method == RankMethod::exact_svd) return static_cast<double>(effective_rank(m, rel_tol));
  const auto sigma = singular_values(m);
  if (sigma.empty() || sigma.front() <= 0.0) return 0.0;
  double sum = 0.0;
  for (double s : sigma) sum += s;
  return sum / sigma.front();
}

double nuclear_norm(const DenseMatrix& m) {
  double sum = 0.0;
  for (double s : singular_values(m)) sum += s;
  return sum;
}

RidgeSolve regularized_solve_ones(const DenseMatrix& g, double ridge) {
  require_finite(g, "regularized_solve_ones");
  const std::size_t k = g.rows();
  if (k == 0 || g.cols() != k) throw Error(ErrorCode::InvalidMatrix, "gram matrix must be square and non-empty");
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      if (std::abs(g(i, j) - g(j, i)) > 1e-9)
        throw Error(ErrorCode::InvalidMatrix, "gram matrix is not symmetric");
  if (!(ridge >= 0.0)) throw Error(ErrorCode::InvalidMatrix, "ridge must be non-negative");

  const Eigen::MatrixXd base = as_eigen(g);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k));

  auto attempt = [&](double r, RidgeSolve& out) {
    Eigen::MatrixXd a = base;
    a.diagonal().array() += r;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || 1.0 / rcond > kMaxConditionEstimate) return false;
    Eigen::VectorXd x = lu.solve(ones);
    if (!x.allFinite()) return false;
    out.x.assign(x.data(), x.data() + x.size());
    out.ridge = r;
    return true;
  };

  RidgeSolve out;
  if (attempt(ridge, out)) return out;

  double step = 1e-6 * base.trace() / static_cast<double>(k);
  if (!(step > 0.0)) step = 1e-6;
  step = std::max(step, ridge);
  for (int i = 0; i <= kMaxRidgeDoublings; ++i, step *= 2.0) {
    out.escalations = i + 1;
    if (attempt(step, out)) return out;
  }
  throw Error(ErrorCode::SingularGram, "gram matrix singular after ridge escalation");
}

}  // namespace mos
