#include "mrtl/grid.hpp"

#include <cmath>
#include <string>

#include "mrtl/error.hpp"

namespace mrtl {

std::size_t GridSpec::cells() const {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

double GridSpec::cell_width(std::size_t axis) const {
  return (extent.at(axis).second - extent.at(axis).first) / static_cast<double>(dims.at(axis));
}

double GridSpec::diameter() const {
  double s = 0.0;
  for (const auto& [lo, hi] : extent) s += (hi - lo) * (hi - lo);
  return std::sqrt(s);
}

void GridSpec::validate() const {
  if (dims.empty()) throw ShapeError("GridSpec: no axes");
  if (dims.size() != extent.size()) throw ShapeError("GridSpec: dims and extent differ in axis count");
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (dims[a] < 1) throw ShapeError("GridSpec: axis " + std::to_string(a) + " has no cells");
    if (!(extent[a].first < extent[a].second)) throw ShapeError("GridSpec: axis " + std::to_string(a) + " extent min >= max");
  }
}

GridSpec make_grid(std::vector<std::size_t> dims, std::vector<std::pair<double, double>> extent) {
  GridSpec g{std::move(dims), std::move(extent)};
  g.validate();
  return g;
}

GridSpec make_grid(std::vector<std::size_t> dims) {
  std::vector<std::pair<double, double>> extent(dims.size(), {0.0, 1.0});
  return make_grid(std::move(dims), std::move(extent));
}

bool refines(const GridSpec& coarse, const GridSpec& fine) {
  if (coarse.axes() != fine.axes() || coarse.extent != fine.extent) return false;
  for (std::size_t a = 0; a < coarse.axes(); ++a)
    if (fine.dims[a] % coarse.dims[a] != 0) return false;
  return true;
}

std::vector<std::size_t> cell_coords(const GridSpec& g, std::size_t cell) {
  std::vector<std::size_t> c(g.axes());
  for (std::size_t a = g.axes(); a-- > 0;) {
    c[a] = cell % g.dims[a];
    cell /= g.dims[a];
  }
  return c;
}

std::vector<std::vector<double>> cell_centers(const GridSpec& g) {
  g.validate();
  std::vector<std::vector<double>> out(g.cells(), std::vector<double>(g.axes()));
  for (std::size_t cell = 0; cell < g.cells(); ++cell) {
    const auto c = cell_coords(g, cell);
    for (std::size_t a = 0; a < g.axes(); ++a)
      out[cell][a] = g.extent[a].first + (static_cast<double>(c[a]) + 0.5) * g.cell_width(a);
  }
  return out;
}

Matrix normalized_distances(const GridSpec& g) {
  const auto centers = cell_centers(g);
  const std::size_t n = centers.size();
  const double diam = g.diameter();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < g.axes(); ++a) {
        const double diff = centers[i][a] - centers[j][a];
        s += diff * diff;
      }
      d(i, j) = d(j, i) = std::sqrt(s) / diam;
    }
  return d;
}

std::size_t ResolutionLadder::total_cells(std::size_t level) const {
  std::size_t n = 1;
  for (const auto& g : levels.at(level)) n *= g.cells();
  return n;
}

void ResolutionLadder::validate() const {
  if (levels.empty()) throw ShapeError("ResolutionLadder: no levels");
  if (r0 < 1 || r0 > levels.size()) throw ShapeError("ResolutionLadder: r0 must lie in [1, R]");
  const std::size_t modes = levels.front().size();
  if (modes == 0) throw ShapeError("ResolutionLadder: levels need at least one spatial mode");
  for (std::size_t r = 0; r < levels.size(); ++r) {
    if (levels[r].size() != modes) throw ShapeError("ResolutionLadder: level " + std::to_string(r + 1) + " has a different spatial mode count");
    for (const auto& g : levels[r]) g.validate();
    if (r == 0) continue;
    for (std::size_t s = 0; s < modes; ++s) {
      if (!refines(levels[r - 1][s], levels[r][s])) {
        throw ShapeError("ResolutionLadder: level " + std::to_string(r + 1) + " does not refine level " +
                         std::to_string(r) + " on spatial mode " + std::to_string(s));
      }
    }
    if (total_cells(r) <= total_cells(r - 1)) {
      throw ShapeError("ResolutionLadder: total cell count must increase at level " + std::to_string(r + 1));
    }
  }
}

ResolutionLadder make_ladder(const std::vector<std::vector<std::size_t>>& dims,
                             std::vector<std::pair<double, double>> extent, std::size_t r0) {
  ResolutionLadder l;
  for (const auto& d : dims) l.levels.push_back({make_grid(d, extent)});
  l.r0 = r0;
  l.validate();
  return l;
}

}  // namespace mrtl
