#pragma once

// Finegraining operators P (fine x coarse) between grid resolutions.
//
// Multi-axis grids use the Kronecker product of per-axis 1D operators, in
// the row-major cell order of the grid module.

#include <cstdint>
#include <utility>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/models.hpp"
#include "mrtl/tensor.hpp"

namespace mrtl {

enum class InterpScheme { nearest, multilinear };

// cell: weights interpolate between cell centers (grid module geometry).
// node: fine node j sits at j / ratio on a 1-based coarse node lattice with
//       hat basis functions, zero outside; reproduces the textbook dyadic
//       example P = 1/2 [[1,0],[2,0],[1,1],[0,2]].
enum class CenterConvention { cell, node };

InterpScheme parse_scheme(const std::string& s);
std::string to_string(InterpScheme s);

struct InterpEntry {
  std::size_t row;
  std::size_t col;
  double value;
};

struct InterpOperator {
  std::size_t fine_dim = 0;
  std::size_t coarse_dim = 0;
  std::vector<InterpEntry> entries;  // sorted by row, then column
  InterpScheme scheme = InterpScheme::nearest;
  double scale_correction = 1.0;

  Matrix dense() const;  // without scale_correction
  // Rows of `m` are coarse cells; returns P * m (optionally scaled).
  Matrix apply(const Matrix& m, bool scaled = true) const;
};

InterpOperator build_nearest(const GridSpec& coarse, const GridSpec& fine);
InterpOperator build_multilinear(const GridSpec& coarse, const GridSpec& fine,
                                 CenterConvention conv = CenterConvention::cell);
InterpOperator build_operator(InterpScheme scheme, const GridSpec& coarse, const GridSpec& fine);

// One operator per spatial mode for a ladder transition.
std::vector<InterpOperator> build_level_operators(InterpScheme scheme, const Level& coarse, const Level& fine);

// Applies P (with scale correction) along `mode` of t.
DenseTensor apply_along_mode(const DenseTensor& t, std::size_t mode, const InterpOperator& op);

// Full rank: every spatial mode of W is refined; bias is kept.
FullRankModel finegrain_weights(const FullRankModel& m, const std::vector<InterpOperator>& ops);
// Low rank: only the spatial factors are refined.
LowRankModel finegrain_weights(const LowRankModel& m, const std::vector<InterpOperator>& ops);

// Largest singular value of P (scale correction excluded) by power
// iteration on P^T P.
constexpr double kNormTol = 1e-10;
constexpr std::size_t kNormMaxIters = 10000;
double operator_norm(const InterpOperator& p);

}  // namespace mrtl
