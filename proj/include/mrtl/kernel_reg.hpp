#pragma once

// Spatial RBF kernel and the regularized objective
//
//   f = loss + lambda * (spatial_weight * sum R_s + l2_weight * ||params||^2)
//   R_s = sum_{d,d'} K[d,d'] * || W_{..d..} - W_{..d'..} ||_F^2
//   K[d,d'] = exp(-dist(d,d')^2 / sigma)     (dist normalized by extent diameter)

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/tensor.hpp"

namespace mrtl {

struct RegConfig {
  double lambda = 1e-3;
  double l2_weight = 1.0;
  double spatial_weight = 1.0;
  double sigma = 0.05;
  double sparsify_below = 0.0;

  void validate() const;
};

class SpatialKernel {
 public:
  SpatialKernel(const GridSpec& grid, double sigma, double sparsify_below = 0.0);

  std::size_t dim() const { return cells_; }
  double sigma() const { return sigma_; }
  const GridSpec& grid() const { return grid_; }
  bool separable() const { return sparsify_below_ == 0.0; }

  // Dense D x D kernel. Built only for grids up to kDenseLimit cells or when
  // sparsification is on.
  bool has_dense() const { return dense_.size() != 0; }
  const Matrix& dense() const;
  double entry(std::size_t a, std::size_t b) const;

  // K * m where m has one row per cell. Returns the multiply-add count in `macs`.
  Matrix apply(const Matrix& m, std::uint64_t* macs = nullptr) const;
  const std::vector<double>& row_sums() const { return row_sums_; }

  static constexpr std::size_t kDenseLimit = 4096;

 private:
  GridSpec grid_;
  double sigma_;
  double sparsify_below_;
  std::size_t cells_;
  std::vector<Matrix> axis_factors_;  // per-axis 1D kernels, product form
  Matrix dense_;
  std::vector<double> row_sums_;
};

SpatialKernel build_rbf_kernel(const GridSpec& g, double sigma, double sparsify_below = 0.0);

struct SpatialRegResult {
  double value = 0.0;
  std::uint64_t macs = 0;
};

// R_s of `values` (tensor of `shape`) along `mode`; adds scale * dR_s/dW into `grad`
// when it is non-empty.
SpatialRegResult spatial_reg(std::span<const double> values, const Shape& shape, std::size_t mode,
                             const SpatialKernel& k, std::span<double> grad = {}, double scale = 1.0);

std::pair<double, DenseTensor> spatial_reg(const DenseTensor& w, std::size_t spatial_mode, const SpatialKernel& k);

// One parameter block seen by the regularizer. Spatial entries name the
// block's tensor modes that index locations.
struct RegBlock {
  std::span<const double> values;
  Shape shape;
  std::span<double> grad;
  std::vector<std::pair<std::size_t, const SpatialKernel*>> spatial;
};

struct ObjectiveValue {
  double value = 0.0;
  double loss = 0.0;
  double spatial = 0.0;  // sum of R_s, unscaled
  double l2 = 0.0;       // sum of squared parameters, unscaled
  std::uint64_t macs = 0;
};

// Adds the regularizer gradient into each block's grad (which should already
// hold dL/dparams) and returns the assembled objective.
ObjectiveValue objective(double loss, std::span<RegBlock> blocks, const RegConfig& cfg);

}  // namespace mrtl
