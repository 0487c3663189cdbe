#pragma once

// Rectangular spatial grids and resolution ladders.
//
// Cells are indexed row-major over the axes (axis 0 slowest), matching the
// tensor layout, so a spatial mode of size prod(dims) can be reshaped to the
// grid without permutation.

#include <cstddef>
#include <utility>
#include <vector>

#include "mrtl/tensor.hpp"

namespace mrtl {

struct GridSpec {
  std::vector<std::size_t> dims;
  std::vector<std::pair<double, double>> extent;  // (min, max) per axis

  std::size_t axes() const { return dims.size(); }
  std::size_t cells() const;
  double cell_width(std::size_t axis) const;
  // Corner-to-corner length of the extent.
  double diameter() const;
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

GridSpec make_grid(std::vector<std::size_t> dims, std::vector<std::pair<double, double>> extent);
// Unit extent [0,1] on every axis.
GridSpec make_grid(std::vector<std::size_t> dims);

// True when `fine` shares the extent of `coarse` and every axis count is an
// integer multiple of the coarse one.
bool refines(const GridSpec& coarse, const GridSpec& fine);

std::vector<std::vector<double>> cell_centers(const GridSpec& g);
std::vector<std::size_t> cell_coords(const GridSpec& g, std::size_t cell);

// Pairwise center distances divided by the extent diameter. Entries lie in
// [0, 1); the divisor is the same at every resolution.
Matrix normalized_distances(const GridSpec& g);

// One resolution level: a grid per spatial mode.
using Level = std::vector<GridSpec>;

struct ResolutionLadder {
  std::vector<Level> levels;
  std::size_t r0 = 1;  // 1-based index of the last full-rank level

  std::size_t size() const { return levels.size(); }
  std::size_t spatial_modes() const { return levels.empty() ? 0 : levels.front().size(); }
  std::size_t total_cells(std::size_t level) const;
  void validate() const;
};

// Single-mode ladder from a list of per-axis dims over a shared extent.
ResolutionLadder make_ladder(const std::vector<std::vector<std::size_t>>& dims,
                             std::vector<std::pair<double, double>> extent, std::size_t r0);

}  // namespace mrtl
