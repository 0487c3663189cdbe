#pragma once

// Dense tensors and the multilinear kernels shared by every module.
//
// Layout convention (used everywhere in the library): row-major, the last
// mode varies fastest. mode_unfold keeps that order for the remaining modes,
// and khatri_rao puts its first operand on the slowest-varying row index, so
//
//   mode_unfold(cp_reconstruct(F), n) == F[n] * diag(lambda) * khatri_rao(F[m] for m != n)^T
//
// with the other modes taken in increasing order.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace mrtl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor scalar(double value) { return DenseTensor({}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  std::size_t offset(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  Shape strides() const;
  bool all_finite() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Row-major dense matrix. Factor matrices are rows = mode size, cols = rank.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using FactorMatrix = Matrix;

// CP (Kruskal) representation: W = sum_k lambda_k * outer(F[0][:,k], ..., F[N-1][:,k]).
struct CPFactors {
  std::vector<FactorMatrix> factors;
  std::vector<double> lambdas;  // empty means all ones

  std::size_t rank() const;
  Shape shape() const;
  double lambda(std::size_t k) const { return lambdas.empty() ? 1.0 : lambdas[k]; }
};

// Sums products of w and x over `modes`; the remaining modes are shared
// (elementwise) and keep their order. w and x must have identical shapes.
DenseTensor contract_modes(const DenseTensor& w, const DenseTensor& x,
                           std::span<const std::size_t> modes);

Matrix mode_unfold(const DenseTensor& t, std::size_t mode);
DenseTensor mode_fold(const Matrix& m, std::size_t mode, const Shape& shape);

Matrix khatri_rao(std::span<const Matrix> ms);

DenseTensor cp_reconstruct(const CPFactors& f);

// Matricized tensor times Khatri-Rao product along `mode`:
//   out[i, k] = sum over the other indices of t[..., i, ...] * prod_{m != mode} factors[m](i_m, k)
// `factors[mode]` is ignored (only its rank is checked).
Matrix mttkrp(const DenseTensor& t, std::span<const Matrix> factors, std::size_t mode);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& a);  // a^T a
double frobenius_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace mrtl
