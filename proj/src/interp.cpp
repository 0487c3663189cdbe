#include "mrtl/interp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mrtl/error.hpp"

namespace mrtl {
namespace {

void require_refinement(const GridSpec& coarse, const GridSpec& fine) {
  coarse.validate();
  fine.validate();
  if (!refines(coarse, fine)) throw ShapeError("interpolation: fine grid does not refine the coarse grid");
}

using Axis1D = Matrix;  // fine x coarse

Axis1D nearest_1d(std::size_t dc, std::size_t df) {
  const std::size_t q = df / dc;
  Axis1D p(df, dc);
  for (std::size_t j = 0; j < df; ++j) p(j, j / q) = 1.0;
  return p;
}

Axis1D linear_cell_1d(std::size_t dc, std::size_t df) {
  const long q = static_cast<long>(df / dc);
  Axis1D p(df, dc);
  for (std::size_t j = 0; j < df; ++j) {
    // Fine center in coarse-center index units: (2j + 1 - q) / (2q).
    const long num = 2 * static_cast<long>(j) + 1 - q;
    const long den = 2 * q;
    if (num <= 0) {
      p(j, 0) = 1.0;
      continue;
    }
    const long i0 = num / den;
    if (i0 >= static_cast<long>(dc) - 1) {
      p(j, dc - 1) = 1.0;
      continue;
    }
    const double t = static_cast<double>(num - i0 * den) / static_cast<double>(den);
    p(j, static_cast<std::size_t>(i0)) = 1.0 - t;
    if (t > 0) p(j, static_cast<std::size_t>(i0) + 1) = t;
  }
  return p;
}

Axis1D linear_node_1d(std::size_t dc, std::size_t df) {
  const double q = static_cast<double>(df / dc);
  Axis1D p(df, dc);
  for (std::size_t j = 1; j <= df; ++j) {
    const double t = static_cast<double>(j) / q;
    for (std::size_t i = 1; i <= dc; ++i) {
      const double w = 1.0 - std::abs(t - static_cast<double>(i));
      if (w > 0) p(j - 1, i - 1) = w;
    }
  }
  return p;
}

InterpOperator kron_axes(const std::vector<Axis1D>& axes, const GridSpec& coarse, const GridSpec& fine,
                         InterpScheme scheme) {
  InterpOperator op;
  op.fine_dim = fine.cells();
  op.coarse_dim = coarse.cells();
  op.scheme = scheme;
  for (std::size_t r = 0; r < op.fine_dim; ++r) {
    const auto fc = cell_coords(fine, r);
    for (std::size_t c = 0; c < op.coarse_dim; ++c) {
      const auto cc = cell_coords(coarse, c);
      double v = 1.0;
      for (std::size_t a = 0; a < axes.size() && v != 0.0; ++a) v *= axes[a](fc[a], cc[a]);
      if (v != 0.0) op.entries.push_back({r, c, v});
    }
  }
  return op;
}

}  // namespace

InterpScheme parse_scheme(const std::string& s) {
  if (s == "nearest") return InterpScheme::nearest;
  if (s == "multilinear") return InterpScheme::multilinear;
  throw SchemaError("unknown interpolation scheme '" + s + "'");
}

std::string to_string(InterpScheme s) { return s == InterpScheme::nearest ? "nearest" : "multilinear"; }

Matrix InterpOperator::dense() const {
  Matrix m(fine_dim, coarse_dim);
  for (const auto& e : entries) m(e.row, e.col) += e.value;
  return m;
}

Matrix InterpOperator::apply(const Matrix& m, bool scaled) const {
  if (m.rows() != coarse_dim) {
    throw ShapeError("InterpOperator::apply: expected " + std::to_string(coarse_dim) + " rows, got " +
                     std::to_string(m.rows()));
  }
  const double s = scaled ? scale_correction : 1.0;
  Matrix out(fine_dim, m.cols());
  for (const auto& e : entries) {
    const double w = e.value * s;
    for (std::size_t c = 0; c < m.cols(); ++c) out(e.row, c) += w * m(e.col, c);
  }
  return out;
}

InterpOperator build_nearest(const GridSpec& coarse, const GridSpec& fine) {
  require_refinement(coarse, fine);
  std::vector<Axis1D> axes;
  for (std::size_t a = 0; a < coarse.axes(); ++a) axes.push_back(nearest_1d(coarse.dims[a], fine.dims[a]));
  auto op = kron_axes(axes, coarse, fine, InterpScheme::nearest);
  op.scale_correction = 1.0;
  return op;
}

InterpOperator build_multilinear(const GridSpec& coarse, const GridSpec& fine, CenterConvention conv) {
  require_refinement(coarse, fine);
  std::vector<Axis1D> axes;
  for (std::size_t a = 0; a < coarse.axes(); ++a) {
    axes.push_back(conv == CenterConvention::cell ? linear_cell_1d(coarse.dims[a], fine.dims[a])
                                                  : linear_node_1d(coarse.dims[a], fine.dims[a]));
  }
  auto op = kron_axes(axes, coarse, fine, InterpScheme::multilinear);
  op.scale_correction = static_cast<double>(coarse.cells()) / static_cast<double>(fine.cells());
  return op;
}

InterpOperator build_operator(InterpScheme scheme, const GridSpec& coarse, const GridSpec& fine) {
  return scheme == InterpScheme::nearest ? build_nearest(coarse, fine) : build_multilinear(coarse, fine);
}

std::vector<InterpOperator> build_level_operators(InterpScheme scheme, const Level& coarse, const Level& fine) {
  if (coarse.size() != fine.size()) throw ShapeError("build_level_operators: spatial mode counts differ");
  std::vector<InterpOperator> ops;
  for (std::size_t s = 0; s < coarse.size(); ++s) ops.push_back(build_operator(scheme, coarse[s], fine[s]));
  return ops;
}

DenseTensor apply_along_mode(const DenseTensor& t, std::size_t mode, const InterpOperator& op) {
  if (mode >= t.order()) throw ShapeError("apply_along_mode: mode out of range");
  if (t.dim(mode) != op.coarse_dim) {
    throw ShapeError("apply_along_mode: mode " + std::to_string(mode) + " has size " + std::to_string(t.dim(mode)) +
                     ", operator expects " + std::to_string(op.coarse_dim));
  }
  Shape out_shape = t.shape();
  out_shape[mode] = op.fine_dim;
  DenseTensor out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (std::size_t j = 0; j < mode; ++j) outer *= t.dim(j);
  for (std::size_t j = mode + 1; j < t.order(); ++j) inner *= t.dim(j);
  const auto src = t.data();
  auto dst = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (const auto& e : op.entries) {
      const double w = e.value * op.scale_correction;
      const double* s = src.data() + (o * op.coarse_dim + e.col) * inner;
      double* d = dst.data() + (o * op.fine_dim + e.row) * inner;
      for (std::size_t i = 0; i < inner; ++i) d[i] += w * s[i];
    }
  return out;
}

FullRankModel finegrain_weights(const FullRankModel& m, const std::vector<InterpOperator>& ops) {
  if (ops.size() != m.spatial_modes()) throw ShapeError("finegrain_weights: one operator per spatial mode required");
  FullRankModel out = m;
  for (std::size_t s = 0; s < ops.size(); ++s) out.w = apply_along_mode(out.w, 2 + s, ops[s]);
  return out;
}

LowRankModel finegrain_weights(const LowRankModel& m, const std::vector<InterpOperator>& ops) {
  if (ops.size() != m.c.size()) throw ShapeError("finegrain_weights: one operator per spatial mode required");
  LowRankModel out = m;
  for (std::size_t s = 0; s < ops.size(); ++s) out.c[s] = ops[s].apply(m.c[s]);
  return out;
}

double operator_norm(const InterpOperator& p) {
  if (p.entries.empty() || p.coarse_dim == 0) throw ShapeError("operator_norm: empty operator");
  const std::size_t n = p.coarse_dim;
  // Deterministic start with distinct positive entries.
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + static_cast<double>(i) / static_cast<double>(n);
  auto normalize = [](std::vector<double>& x) {
    const double s = frobenius_norm(x);
    for (double& e : x) e /= s;
  };
  auto ptp = [&](const std::vector<double>& x) {
    std::vector<double> y(p.fine_dim, 0.0), z(n, 0.0);
    for (const auto& e : p.entries) y[e.row] += e.value * x[e.col];
    for (const auto& e : p.entries) z[e.col] += e.value * y[e.row];
    return z;
  };
  normalize(v);
  double lambda = 0.0, resid = 0.0;
  for (std::size_t it = 0; it < kNormMaxIters; ++it) {
    const auto z = ptp(v);
    lambda = dot(v, z);
    resid = 0.0;
    for (std::size_t i = 0; i < n; ++i) resid += (z[i] - lambda * v[i]) * (z[i] - lambda * v[i]);
    resid = std::sqrt(resid);
    if (lambda <= 0) throw NumericError("operator_norm: operator annihilates the iterate");
    if (resid <= kNormTol * lambda) return std::sqrt(lambda);
    v = z;
    normalize(v);
  }
  throw NumericError("operator_norm: power iteration did not converge; residual " + std::to_string(resid));
}

}  // namespace mrtl
