#include "mrtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mrtl/error.hpp"

namespace mrtl {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("DenseTensor: payload has " + std::to_string(data_.size()) +
                     " entries, shape requires " + std::to_string(shape_size(shape_)));
  }
}

Shape DenseTensor::strides() const {
  Shape s(shape_.size(), 1);
  for (std::size_t m = shape_.size(); m-- > 1;) s[m - 1] = s[m] * shape_[m];
  return s;
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("DenseTensor: index order mismatch");
  std::size_t off = 0;
  for (std::size_t m = 0; m < shape_.size(); ++m) {
    if (index[m] >= shape_[m]) throw ShapeError("DenseTensor: index out of range on mode " + std::to_string(m));
    off = off * shape_[m] + index[m];
  }
  return off;
}

double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset({index.begin(), index.size()})];
}

double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset({index.begin(), index.size()})];
}

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw ShapeError("Matrix: payload size does not match rows*cols");
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t CPFactors::rank() const {
  if (factors.empty()) return 0;
  const std::size_t k = factors.front().cols();
  for (std::size_t n = 1; n < factors.size(); ++n) {
    if (factors[n].cols() != k) {
      throw ShapeError("CPFactors: factor " + std::to_string(n) + " has rank " +
                       std::to_string(factors[n].cols()) + ", expected " + std::to_string(k));
    }
  }
  if (!lambdas.empty() && lambdas.size() != k) throw ShapeError("CPFactors: lambdas length differs from rank");
  return k;
}

Shape CPFactors::shape() const {
  Shape s;
  for (const auto& f : factors) s.push_back(f.rows());
  return s;
}

DenseTensor contract_modes(const DenseTensor& w, const DenseTensor& x,
                           std::span<const std::size_t> modes) {
  if (w.order() != x.order()) throw ShapeError("contract_modes: operands differ in order");
  const std::size_t order = w.order();
  std::vector<bool> contracted(order, false);
  for (std::size_t m : modes) {
    if (m >= order) throw ShapeError("contract_modes: mode " + std::to_string(m) + " out of range");
    contracted[m] = true;
  }
  for (std::size_t m = 0; m < order; ++m) {
    if (w.dim(m) != x.dim(m)) {
      throw ShapeError("contract_modes: size mismatch on mode " + std::to_string(m) + " (" +
                       std::to_string(w.dim(m)) + " vs " + std::to_string(x.dim(m)) + ")");
    }
  }

  Shape out_shape;
  for (std::size_t m = 0; m < order; ++m)
    if (!contracted[m]) out_shape.push_back(w.dim(m));
  DenseTensor out(out_shape);

  // Walk every element once, mapping it onto its surviving-mode offset.
  std::vector<std::size_t> idx(order, 0);
  const Shape out_strides = out.strides();
  for (std::size_t flat = 0; flat < w.size(); ++flat) {
    std::size_t o = 0;
    for (std::size_t m = 0, j = 0; m < order; ++m)
      if (!contracted[m]) o += idx[m] * out_strides[j++];
    out[o] += w[flat] * x[flat];
    for (std::size_t m = order; m-- > 0;) {
      if (++idx[m] < w.dim(m)) break;
      idx[m] = 0;
    }
  }
  return out;
}

Matrix mode_unfold(const DenseTensor& t, std::size_t mode) {
  if (mode >= t.order()) throw ShapeError("mode_unfold: mode " + std::to_string(mode) + " out of range");
  const Shape& s = t.shape();
  const std::size_t rows = s[mode];
  std::size_t outer = 1, inner = 1;
  for (std::size_t m = 0; m < mode; ++m) outer *= s[m];
  for (std::size_t m = mode + 1; m < s.size(); ++m) inner *= s[m];
  Matrix out(rows, outer * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < inner; ++i) out(r, o * inner + i) = t[(o * rows + r) * inner + i];
  return out;
}

DenseTensor mode_fold(const Matrix& m, std::size_t mode, const Shape& shape) {
  if (mode >= shape.size()) throw ShapeError("mode_fold: mode " + std::to_string(mode) + " out of range");
  const std::size_t rows = shape[mode];
  std::size_t outer = 1, inner = 1;
  for (std::size_t j = 0; j < mode; ++j) outer *= shape[j];
  for (std::size_t j = mode + 1; j < shape.size(); ++j) inner *= shape[j];
  if (m.rows() != rows || m.cols() != outer * inner) throw ShapeError("mode_fold: matrix does not match shape");
  DenseTensor out(shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < inner; ++i) out[(o * rows + r) * inner + i] = m(r, o * inner + i);
  return out;
}

Matrix khatri_rao(std::span<const Matrix> ms) {
  if (ms.empty()) throw ShapeError("khatri_rao: no operands");
  const std::size_t k = ms.front().cols();
  for (std::size_t n = 1; n < ms.size(); ++n)
    if (ms[n].cols() != k) throw ShapeError("khatri_rao: operand " + std::to_string(n) + " has a different column count");
  Matrix acc = ms.front();
  for (std::size_t n = 1; n < ms.size(); ++n) {
    const Matrix& b = ms[n];
    Matrix next(acc.rows() * b.rows(), k);
    for (std::size_t i = 0; i < acc.rows(); ++i)
      for (std::size_t j = 0; j < b.rows(); ++j)
        for (std::size_t c = 0; c < k; ++c) next(i * b.rows() + j, c) = acc(i, c) * b(j, c);
    acc = std::move(next);
  }
  return acc;
}

DenseTensor cp_reconstruct(const CPFactors& f) {
  const std::size_t k = f.rank();
  if (f.factors.empty()) throw ShapeError("cp_reconstruct: no factors");
  const Shape shape = f.shape();
  DenseTensor out(shape);
  if (f.factors.size() == 1) {
    for (std::size_t i = 0; i < shape[0]; ++i)
      for (std::size_t c = 0; c < k; ++c) out[i] += f.lambda(c) * f.factors[0](i, c);
    return out;
  }
  // W_(0) = F0 * diag(lambda) * KR(F1..)^T
  const Matrix kr = khatri_rao(std::span(f.factors).subspan(1));
  const Matrix& a = f.factors[0];
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* row = out.data().data() + i * kr.rows();
    for (std::size_t j = 0; j < kr.rows(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += f.lambda(c) * a(i, c) * kr(j, c);
      row[j] = s;
    }
  }
  return out;
}

Matrix mttkrp(const DenseTensor& t, std::span<const Matrix> factors, std::size_t mode) {
  const std::size_t order = t.order();
  if (factors.size() != order) throw ShapeError("mttkrp: need one factor per mode");
  if (mode >= order) throw ShapeError("mttkrp: mode out of range");
  const std::size_t k = factors[mode].cols();
  std::vector<Matrix> others;
  for (std::size_t m = 0; m < order; ++m) {
    if (factors[m].cols() != k) throw ShapeError("mttkrp: rank mismatch on mode " + std::to_string(m));
    if (m == mode) continue;
    if (factors[m].rows() != t.dim(m)) throw ShapeError("mttkrp: factor rows differ from tensor size on mode " + std::to_string(m));
    others.push_back(factors[m]);
  }
  const std::size_t rows = t.dim(mode);
  Matrix out(rows, k);
  if (others.empty()) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t c = 0; c < k; ++c) out(i, c) = t[i];
    return out;
  }
  const Matrix kr = khatri_rao(others);
  std::size_t outer = 1, inner = 1;
  for (std::size_t m = 0; m < mode; ++m) outer *= t.dim(m);
  for (std::size_t m = mode + 1; m < order; ++m) inner *= t.dim(m);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = t.data().data() + (o * rows + r) * inner;
      double* dst = out.data().data() + r * k;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = src[i];
        const double* krow = kr.data().data() + (o * inner + i) * k;
        for (std::size_t c = 0; c < k; ++c) dst[c] += v * krow[c];
      }
    }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double v = a(i, p);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += v * b(p, j);
    }
  return out;
}

Matrix gram(const Matrix& a) {
  Matrix g(a.cols(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t i = 0; i < a.cols(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j) g(i, j) += a(r, i) * a(r, j);
  return g;
}

double frobenius_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace mrtl
