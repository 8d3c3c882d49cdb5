#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "delivr/common.hpp"

namespace delivr {

/// Unit-norm 3D coordinates for the patch grid. Patch centers are mapped to
/// [-1,1]^2 and lifted to height h before normalization, so the rotation axis
/// (z) stays orthogonal to the image plane.
struct CoordGrid {
  std::size_t rows = 0, cols = 0;
  double lift_height = 1.0;
  std::vector<Eigen::Vector3d> points;  // row-major over the patch grid

  std::size_t size() const { return points.size(); }
};

inline CoordGrid build_grid(std::size_t rows, std::size_t cols, double lift_height = 1.0) {
  if (rows == 0 || cols == 0) throw ConfigError("build_grid: zero-size grid");
  if (!(lift_height > 0.0)) throw ConfigError("build_grid: lift height must be > 0");
  CoordGrid g;
  g.rows = rows;
  g.cols = cols;
  g.lift_height = lift_height;
  g.points.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double x = (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(cols) - 1.0;
      double y = (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(rows) - 1.0;
      Eigen::Vector3d p(x, y, lift_height);
      g.points.push_back(p / p.norm());
    }
  }
  return g;
}

/// Per-frame rotated copies of the grid, flattened frame-major (token layout).
struct RotatedCoords {
  std::size_t frames = 0, n = 0;
  std::vector<Eigen::Vector3d> points;  // size frames * n

  const Eigen::Vector3d& at(std::size_t t, std::size_t i) const {
    return points[token_index(t, i, n)];
  }
};

/// Rotate every grid point about the z axis by each frame's angle.
/// The z component is untouched, so unit norm is preserved exactly.
inline RotatedCoords rotate_coords(const CoordGrid& grid, const std::vector<double>& angles) {
  RotatedCoords rc;
  rc.frames = angles.size();
  rc.n = grid.size();
  rc.points.reserve(rc.frames * rc.n);
  for (double theta : angles) {
    double c = std::cos(theta), s = std::sin(theta);
    for (const auto& p : grid.points) {
      rc.points.emplace_back(p.x() * c - p.y() * s, p.x() * s + p.y() * c, p.z());
    }
  }
  return rc;
}

}  // namespace delivr
