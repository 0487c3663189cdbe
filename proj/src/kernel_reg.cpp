#include "mrtl/kernel_reg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mrtl/error.hpp"

namespace mrtl {

void RegConfig::validate() const {
  if (lambda < 0 || l2_weight < 0 || spatial_weight < 0) throw SchemaError("RegConfig: coefficients must be nonnegative");
  if (!(sigma > 0)) throw SchemaError("RegConfig: sigma must be positive");
  if (sparsify_below < 0 || sparsify_below >= 1) throw SchemaError("RegConfig: sparsify_below must lie in [0, 1)");
}

SpatialKernel::SpatialKernel(const GridSpec& grid, double sigma, double sparsify_below)
    : grid_(grid), sigma_(sigma), sparsify_below_(sparsify_below), cells_(grid.cells()) {
  grid_.validate();
  if (!(sigma > 0)) throw ShapeError("build_rbf_kernel: sigma must be positive");
  if (sparsify_below < 0 || sparsify_below >= 1) throw ShapeError("build_rbf_kernel: sparsify_below must lie in [0, 1)");

  const double diam = grid_.diameter();
  for (std::size_t a = 0; a < grid_.axes(); ++a) {
    const std::size_t n = grid_.dims[a];
    const double h = grid_.cell_width(a) / diam;
    Matrix f(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double d = (static_cast<double>(i) - static_cast<double>(j)) * h;
        f(i, j) = std::exp(-d * d / sigma);
      }
    axis_factors_.push_back(std::move(f));
  }

  if (!separable() || cells_ <= kDenseLimit) {
    if (cells_ > 4 * kDenseLimit) throw ShapeError("build_rbf_kernel: grid too large for a dense sparsified kernel");
    const Matrix dist = normalized_distances(grid_);
    dense_ = Matrix(cells_, cells_);
    for (std::size_t i = 0; i < cells_; ++i)
      for (std::size_t j = 0; j < cells_; ++j) {
        const double v = std::exp(-dist(i, j) * dist(i, j) / sigma);
        dense_(i, j) = (i != j && v < sparsify_below_) ? 0.0 : v;
      }
  }

  row_sums_.assign(cells_, 0.0);
  if (separable()) {
    std::vector<std::vector<double>> axis_sums;
    for (const auto& f : axis_factors_) {
      std::vector<double> s(f.rows(), 0.0);
      for (std::size_t i = 0; i < f.rows(); ++i)
        for (std::size_t j = 0; j < f.cols(); ++j) s[i] += f(i, j);
      axis_sums.push_back(std::move(s));
    }
    for (std::size_t c = 0; c < cells_; ++c) {
      const auto coords = cell_coords(grid_, c);
      double p = 1.0;
      for (std::size_t a = 0; a < coords.size(); ++a) p *= axis_sums[a][coords[a]];
      row_sums_[c] = p;
    }
  } else {
    for (std::size_t i = 0; i < cells_; ++i)
      for (std::size_t j = 0; j < cells_; ++j) row_sums_[i] += dense_(i, j);
  }
}

const Matrix& SpatialKernel::dense() const {
  if (!has_dense()) throw ShapeError("SpatialKernel: dense form not built for " + std::to_string(cells_) + " cells");
  return dense_;
}

double SpatialKernel::entry(std::size_t a, std::size_t b) const {
  if (has_dense()) return dense_(a, b);
  const auto ca = cell_coords(grid_, a);
  const auto cb = cell_coords(grid_, b);
  double p = 1.0;
  for (std::size_t ax = 0; ax < ca.size(); ++ax) p *= axis_factors_[ax](ca[ax], cb[ax]);
  return p;
}

Matrix SpatialKernel::apply(const Matrix& m, std::uint64_t* macs) const {
  if (m.rows() != cells_) throw ShapeError("SpatialKernel::apply: expected " + std::to_string(cells_) + " rows");
  const std::size_t cols = m.cols();
  if (!separable()) {
    if (macs) *macs += static_cast<std::uint64_t>(cells_) * cells_ * cols;
    return matmul(dense_, m);
  }
  // Apply the 1D kernel along each axis of the (dims..., cols) tensor in turn.
  Matrix cur = m;
  std::size_t outer = 1;
  for (std::size_t a = 0; a < grid_.axes(); ++a) {
    const std::size_t n = grid_.dims[a];
    const std::size_t inner = cells_ / (outer * n) * cols;
    const Matrix& f = axis_factors_[a];
    Matrix next(cur.rows(), cols);
    const double* src = cur.data().data();
    double* dst = next.data().data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < n; ++i) {
        double* drow = dst + (o * n + i) * inner;
        for (std::size_t j = 0; j < n; ++j) {
          const double kij = f(i, j);
          const double* srow = src + (o * n + j) * inner;
          for (std::size_t t = 0; t < inner; ++t) drow[t] += kij * srow[t];
        }
      }
    if (macs) *macs += static_cast<std::uint64_t>(outer) * n * n * inner;
    cur = std::move(next);
    outer *= n;
  }
  return cur;
}

SpatialKernel build_rbf_kernel(const GridSpec& g, double sigma, double sparsify_below) {
  return SpatialKernel(g, sigma, sparsify_below);
}

SpatialRegResult spatial_reg(std::span<const double> values, const Shape& shape, std::size_t mode,
                             const SpatialKernel& k, std::span<double> grad, double scale) {
  if (mode >= shape.size()) throw ShapeError("spatial_reg: mode out of range");
  if (shape[mode] != k.dim()) {
    throw ShapeError("spatial_reg: spatial mode has " + std::to_string(shape[mode]) + " entries, kernel has " +
                     std::to_string(k.dim()));
  }
  if (values.size() != shape_size(shape)) throw ShapeError("spatial_reg: values do not match shape");
  if (!grad.empty() && grad.size() != values.size()) throw ShapeError("spatial_reg: gradient size mismatch");

  // Slices over the spatial mode become the rows of m.
  const std::size_t d = shape[mode];
  std::size_t outer = 1, inner = 1;
  for (std::size_t j = 0; j < mode; ++j) outer *= shape[j];
  for (std::size_t j = mode + 1; j < shape.size(); ++j) inner *= shape[j];
  Matrix m(d, outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t i = 0; i < inner; ++i) m(r, o * inner + i) = values[(o * d + r) * inner + i];

  SpatialRegResult res;
  const Matrix km = k.apply(m, &res.macs);
  const auto& rs = k.row_sums();

  // R_s = 2 sum_d r_d |m_d|^2 - 2 <m, K m>,  dR_s/dm_d = 4 (r_d m_d - (K m)_d)
  double value = 0.0;
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) value += m(r, c) * (rs[r] * m(r, c) - km(r, c));
  res.value = std::max(0.0, 2.0 * value);
  res.macs += 2 * static_cast<std::uint64_t>(m.size());

  if (!grad.empty()) {
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t c = o * inner + i;
          grad[(o * d + r) * inner + i] += scale * 4.0 * (rs[r] * m(r, c) - km(r, c));
        }
    res.macs += static_cast<std::uint64_t>(m.size());
  }
  return res;
}

std::pair<double, DenseTensor> spatial_reg(const DenseTensor& w, std::size_t spatial_mode, const SpatialKernel& k) {
  DenseTensor g(w.shape());
  const auto r = spatial_reg(w.data(), w.shape(), spatial_mode, k, g.data());
  return {r.value, std::move(g)};
}

ObjectiveValue objective(double loss, std::span<RegBlock> blocks, const RegConfig& cfg) {
  ObjectiveValue out;
  out.loss = loss;
  const double ls = cfg.lambda * cfg.spatial_weight;
  const double ll = cfg.lambda * cfg.l2_weight;
  for (auto& b : blocks) {
    if (b.values.size() != shape_size(b.shape)) throw ShapeError("objective: block values do not match its shape");
    if (!b.grad.empty() && b.grad.size() != b.values.size()) throw ShapeError("objective: block gradient size mismatch");
    if (ls > 0) {
      for (const auto& [mode, kernel] : b.spatial) {
        const auto r = spatial_reg(b.values, b.shape, mode, *kernel, b.grad, ls);
        out.spatial += r.value;
        out.macs += r.macs;
      }
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      sq += b.values[i] * b.values[i];
      if (ll > 0 && !b.grad.empty()) b.grad[i] += 2.0 * ll * b.values[i];
    }
    out.l2 += sq;
    out.macs += 2 * static_cast<std::uint64_t>(b.values.size());
  }
  out.value = loss + ls * out.spatial + ll * out.l2;
  return out;
}

}  // namespace mrtl
