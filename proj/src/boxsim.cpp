#include "mos/boxsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "mos/error.hpp"

namespace mos {

namespace {

using Point2 = std::array<double, 2>;

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double shoelace(const std::vector<Point2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    twice += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman: clip `subject` against the convex CCW polygon `clip`.
std::vector<Point2> clip_convex(std::vector<Point2> subject, const std::array<Point2, 4>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Point2& a = clip[e];
    const Point2& b = clip[(e + 1) % clip.size()];
    std::vector<Point2> input;
    input.swap(subject);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const double d_cur = cross(a, b, cur);
      const double d_prev = cross(a, b, prev);
      const bool in_cur = d_cur >= 0.0;
      const bool in_prev = d_prev >= 0.0;
      if (in_cur != in_prev) {
        const double t = d_prev / (d_prev - d_cur);
        subject.push_back({prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])});
      }
      if (in_cur) subject.push_back(cur);
    }
  }
  return subject;
}

void require_real_box(const Box3D& b) {
  if (b.is_pad()) throw Error(ErrorCode::InvalidBox, "padding box passed to box geometry");
  for (double s : b.size)
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidBox, "box size must be positive");
  for (double c : b.center)
    if (!std::isfinite(c)) throw Error(ErrorCode::InvalidBox, "box center must be finite");
  if (!std::isfinite(b.yaw)) throw Error(ErrorCode::InvalidBox, "box yaw must be finite");
}

}  // namespace

double yaw_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return d > kPi ? 2.0 * kPi - d : d;
}

double wrap_angle(double radians) {
  double r = std::fmod(radians + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

std::array<Point2, 4> bev_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.size[0], hw = 0.5 * b.size[1];
  const std::array<Point2, 4> local = {{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {b.center[0] + c * local[i][0] - s * local[i][1],
              b.center[1] + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

double bev_overlap_area(const Box3D& a_in, const Box3D& b_in) {
  // Clip in a canonical order so the result is bitwise symmetric.
  const bool swap = std::tie(b_in.center, b_in.size, b_in.yaw) < std::tie(a_in.center, a_in.size, a_in.yaw);
  const Box3D& a = swap ? b_in : a_in;
  const Box3D& b = swap ? a_in : b_in;
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  // Cheap reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.size[0], a.size[1]);
  const double rb = 0.5 * std::hypot(b.size[0], b.size[1]);
  if (std::hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) >= ra + rb) return 0.0;
  return shoelace(clip_convex({ca.begin(), ca.end()}, cb));
}

double bev_iou(const Box3D& a, const Box3D& b) {
  require_real_box(a);
  require_real_box(b);
  const double inter = bev_overlap_area(a, b);
  const double uni = a.size[0] * a.size[1] + b.size[0] * b.size[1] - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double box_iou(const Box3D& a, const Box3D& b) {
  require_real_box(a);
  require_real_box(b);
  const double za0 = a.center[2] - 0.5 * a.size[2], za1 = a.center[2] + 0.5 * a.size[2];
  const double zb0 = b.center[2] - 0.5 * b.size[2], zb1 = b.center[2] + 0.5 * b.size[2];
  const double dz = std::min(za1, zb1) - std::max(za0, zb0);
  if (dz <= 0.0) return 0.0;
  const double inter = bev_overlap_area(a, b) * dz;
  const double va = a.size[0] * a.size[1] * a.size[2];
  const double vb = b.size[0] * b.size[1] * b.size[2];
  const double uni = va + vb - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

double box_pair_cost(const Box3D& a, const Box3D& b) {
  double cost = 1.0 - box_iou(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    cost += std::abs(a.center[i] - b.center[i]);
    cost += std::abs(a.size[i] - b.size[i]);
  }
  cost += yaw_distance(a.yaw, b.yaw);
  return cost;
}

Assignment hungarian_match(const DenseMatrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw Error(ErrorCode::InvalidCostMatrix, "cost matrix must be square");
  for (double v : cost.data())
    if (!std::isfinite(v) || v < 0.0)
      throw Error(ErrorCode::InvalidCostMatrix, "cost matrix must be finite and non-negative");
  Assignment out;
  if (n == 0) return out;

  // Shortest augmenting path with row/column potentials (1-based, column 0 is
  // the virtual source).
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match_col[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.permutation.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.permutation[match_col[j] - 1] = j - 1;
  for (std::size_t r = 0; r < n; ++r) out.total_cost += cost(r, out.permutation[r]);
  return out;
}

double matched_box_cost(const BoxSet& a, const BoxSet& b, const BoxSimOptions& options) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) {
    const double n = static_cast<double>(a.size() + b.size());
    return n * options.unmatched_cost;
  }
  const std::size_t n = std::max(a.size(), b.size());
  DenseMatrix cost(n, n, 0.0);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < b.size(); ++c) cost(r, c) = box_pair_cost(a[r], b[c]);
  const Assignment match = hungarian_match(cost);
  std::vector<double> matched;
  for (std::size_t r = 0; r < a.size(); ++r) {
    const std::size_t c = match.permutation[r];
    if (c < b.size()) matched.push_back(cost(r, c));
  }
  // Sorted summation keeps T independent of argument order.
  std::sort(matched.begin(), matched.end());
  double total = 0.0;
  for (double c : matched) total += c;
  if (options.box_cost_mean && !matched.empty()) total /= static_cast<double>(matched.size());
  return total;
}

double s_box(const BoxSet& a, const BoxSet& b, const BoxSimOptions& options) {
  const double total = matched_box_cost(a, b, options);
  if (total <= 0.0) return 1.0;
  return 1.0 / (1.0 + std::exp(-1.0 / total));
}

std::vector<std::size_t> nms(const BoxSet& boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return boxes[x].score > boxes[y].score; });
  std::vector<std::size_t> keep;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : keep) {
      if (box_iou(boxes[idx], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) keep.push_back(idx);
  }
  return keep;
}

}  // namespace mos
