#pragma once

// Oriented 3D boxes, pairwise box cost, Hungarian matching and the set-level
// box similarity used in the generalized Gram matrix.

#include <array>
#include <cstddef>
#include <vector>

#include "mos/numkernel.hpp"

namespace mos {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

/// |wrap(a - b)|, computed so that yaw_distance(a, b) == yaw_distance(b, a).
double yaw_distance(double a, double b);

inline constexpr int kPadClass = -1;

struct Box3D {
  std::array<double, 3> center{};  // x, y, z (z is the vertical center)
  std::array<double, 3> size{};    // length (along yaw), width, height
  double yaw = 0.0;
  int class_id = 0;
  double score = 1.0;

  static Box3D pad() {
    Box3D b;
    b.size = {0.0, 0.0, 0.0};
    b.class_id = kPadClass;
    b.score = 0.0;
    return b;
  }
  bool is_pad() const noexcept { return class_id == kPadClass; }

  bool operator==(const Box3D&) const = default;
};

using BoxSet = std::vector<Box3D>;

/// Footprint corners in counter-clockwise order.
std::array<std::array<double, 2>, 4> bev_corners(const Box3D& b);

/// Area of the intersection of two oriented BEV rectangles.
double bev_overlap_area(const Box3D& a, const Box3D& b);

/// BEV IoU (footprint only).
double bev_iou(const Box3D& a, const Box3D& b);

/// 3D IoU: clipped footprint area times vertical overlap over union volume.
double box_iou(const Box3D& a, const Box3D& b);

/// (1 - IoU) + L1(center) + L1(size) + |wrap(yaw difference)|.
double box_pair_cost(const Box3D& a, const Box3D& b);

struct Assignment {
  std::vector<std::size_t> permutation;  // row n -> column permutation[n]
  double total_cost = 0.0;
};

/// Minimum-cost perfect matching on a square, finite, non-negative matrix.
Assignment hungarian_match(const DenseMatrix& cost);

struct BoxSimOptions {
  bool box_cost_mean = false;  ///< divide T by matched real pairs before inversion
  double unmatched_cost = 1.0;  ///< per-box cost when exactly one set is empty
};

/// Output-level similarity in (0, 1]; 1 means identical prediction sets.
double s_box(const BoxSet& a, const BoxSet& b, const BoxSimOptions& options = {});

/// Total matched cost T used by s_box (0 when both sets are empty).
double matched_box_cost(const BoxSet& a, const BoxSet& b, const BoxSimOptions& options = {});

/// Greedy NMS over 3D IoU. Returns surviving indices ordered by descending score.
std::vector<std::size_t> nms(const BoxSet& boxes, double iou_threshold);

}  // namespace mos
