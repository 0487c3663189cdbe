#include <Eigen/SVD>
#include <cmath>

#include "doctest.h"
#include "mrtl/data.hpp"
#include "mrtl/error.hpp"
#include "mrtl/interp.hpp"
#include "test_util.hpp"

using namespace mrtl;
using namespace testutil;

namespace {

double svd_oracle(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues()(0);
}

void check_dense(const Matrix& got, const std::vector<std::vector<double>>& expect) {
  REQUIRE(got.rows() == expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i)
    for (std::size_t j = 0; j < expect[i].size(); ++j) CHECK(got(i, j) == doctest::Approx(expect[i][j]).epsilon(1e-15));
}

GridSpec random_grid(std::mt19937_64& rng, std::size_t axes, std::size_t max_dim = 4) {
  return make_grid(random_shape(rng, axes, 1, max_dim));
}

GridSpec refine(const GridSpec& g, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> f(1, 3);
  std::vector<std::size_t> dims = g.dims;
  bool grew = false;
  for (auto& d : dims) {
    const std::size_t k = f(rng);
    grew |= k > 1;
    d *= k;
  }
  if (!grew) dims[0] *= 2;
  return make_grid(dims);
}

}  // namespace

TEST_CASE("nearest 1D 2 -> 4") {
  const InterpOperator p = build_nearest(make_grid({2}), make_grid({4}));
  check_dense(p.dense(), {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  CHECK(p.scale_correction == 1.0);
  CHECK(std::abs(operator_norm(p) - std::sqrt(2.0)) <= 1e-9);
}

TEST_CASE("multilinear 1D 2 -> 4 interpolates between cell centers") {
  const InterpOperator p = build_multilinear(make_grid({2}), make_grid({4}));
  check_dense(p.dense(), {{1, 0}, {0.75, 0.25}, {0.25, 0.75}, {0, 1}});
  CHECK(p.scale_correction == doctest::Approx(0.5));
}

TEST_CASE("node convention reproduces the dyadic Toeplitz example") {
  const InterpOperator p = build_multilinear(make_grid({2}), make_grid({4}), CenterConvention::node);
  check_dense(p.dense(), {{0.5, 0}, {1, 0}, {0.5, 0.5}, {0, 1}});
  const std::vector<double> w{3.0, -1.0};
  const Matrix pw = p.apply(Matrix(2, 1, w), false);
  CHECK(pw.values() == std::vector<double>{w[0] / 2, w[0], w[0] / 2 + w[1] / 2, w[1]});
  CHECK(std::abs(operator_norm(p) - svd_oracle(p.dense())) <= 1e-9);
  CHECK(std::abs(operator_norm(p) - 1.286276990848967) <= 1e-9);
}

TEST_CASE("operator_norm agrees with a dense SVD on random ladders") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const GridSpec c = random_grid(rng, 1 + trial % 2);
    const GridSpec f = refine(c, rng);
    for (auto scheme : {InterpScheme::nearest, InterpScheme::multilinear}) {
      const InterpOperator p = build_operator(scheme, c, f);
      CHECK(std::abs(operator_norm(p) - svd_oracle(p.dense())) <= 1e-9 * std::max(1.0, svd_oracle(p.dense())));
    }
  }
}

TEST_CASE("nearest norm is the square root of the refinement factor") {
  CHECK(operator_norm(build_nearest(make_grid({4, 5}), make_grid({8, 10}))) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(operator_norm(build_nearest(make_grid({3}), make_grid({9}))) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-9));
}

TEST_CASE("rows are convex combinations; nearest rows are one-hot") {
  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const GridSpec c = random_grid(rng, 1 + trial % 2);
    const GridSpec f = refine(c, rng);
    for (auto scheme : {InterpScheme::nearest, InterpScheme::multilinear}) {
      const Matrix d = build_operator(scheme, c, f).dense();
      for (std::size_t i = 0; i < d.rows(); ++i) {
        double sum = 0.0;
        std::size_t nonzero = 0;
        for (std::size_t j = 0; j < d.cols(); ++j) {
          CHECK(d(i, j) >= 0.0);
          sum += d(i, j);
          nonzero += d(i, j) != 0.0;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
        if (scheme == InterpScheme::nearest) CHECK(nonzero == 1);
      }
    }
  }
}

TEST_CASE("2D operator is the Kronecker product of the axis operators") {
  const GridSpec c = make_grid({2, 3}), f = make_grid({4, 6});
  const Matrix p = build_multilinear(c, f).dense();
  const Matrix p0 = build_multilinear(make_grid({2}), make_grid({4})).dense();
  const Matrix p1 = build_multilinear(make_grid({3}), make_grid({6})).dense();
  for (std::size_t i0 = 0; i0 < 4; ++i0)
    for (std::size_t i1 = 0; i1 < 6; ++i1)
      for (std::size_t j0 = 0; j0 < 2; ++j0)
        for (std::size_t j1 = 0; j1 < 3; ++j1)
          CHECK(p(i0 * 6 + i1, j0 * 3 + j1) == doctest::Approx(p0(i0, j0) * p1(i1, j1)).epsilon(1e-15));
}

TEST_CASE("finegrain_weights examples") {
  std::mt19937_64 rng(73);
  const GridSpec c = make_grid({2, 2}), f = make_grid({4, 4});

  FullRankModel zero = make_full_rank(2, 3, {c.cells()}, Activation::identity);
  zero.bias = {0.5, -1.0};
  const FullRankModel fz = finegrain_weights(zero, {build_nearest(c, f)});
  CHECK(fz.w.shape() == Shape{2, 3, 16});
  for (double v : fz.w.values()) CHECK(v == 0.0);
  CHECK(fz.bias == zero.bias);

  // Constant weights stay constant under nearest; multilinear rescales by
  // the cell ratio.
  FullRankModel k = make_full_rank(1, 1, {c.cells()}, Activation::identity);
  for (double& v : k.w.values()) v = 2.0;
  const FullRankModel kn = finegrain_weights(k, {build_nearest(c, f)});
  const FullRankModel kl = finegrain_weights(k, {build_multilinear(c, f)});
  for (double v : kn.w.values()) CHECK(v == 2.0);
  for (double v : kl.w.values()) CHECK(v == doctest::Approx(0.5));

  LowRankModel low;
  low.a = random_matrix(2, 3, rng);
  low.b = random_matrix(3, 3, rng);
  low.c = {random_matrix(c.cells(), 3, rng)};
  low.bias = {0.1, 0.2};
  const LowRankModel fl = finegrain_weights(low, {build_nearest(c, f)});
  CHECK(fl.a == low.a);
  CHECK(fl.b == low.b);
  CHECK(fl.c[0].rows() == 16);
  CHECK_THROWS_AS(finegrain_weights(low, {}), ShapeError);
}

TEST_CASE("finegraining commutes with reconstruction") {
  std::mt19937_64 rng(74);
  for (int trial = 0; trial < 10; ++trial) {
    const GridSpec c = random_grid(rng, 2, 3);
    const GridSpec f = refine(c, rng);
    LowRankModel low;
    low.a = random_matrix(2, 2, rng);
    low.b = random_matrix(3, 2, rng);
    low.c = {random_matrix(c.cells(), 2, rng)};
    low.bias = {0.0, 0.0};
    for (auto scheme : {InterpScheme::nearest, InterpScheme::multilinear}) {
      const std::vector<InterpOperator> ops{build_operator(scheme, c, f)};
      const auto a = to_full_rank(finegrain_weights(low, ops)).w;
      const auto b = finegrain_weights(to_full_rank(low), ops).w;
      CHECK(max_rel_err(a.values(), b.values()) < 1e-12);
    }
  }
}

TEST_CASE("nearest finegraining preserves outputs on sum-aggregated inputs") {
  std::mt19937_64 rng(75);
  for (int trial = 0; trial < 20; ++trial) {
    const GridSpec c = random_grid(rng, 1 + trial % 2, 3);
    const GridSpec f = refine(c, rng);
    const std::size_t n = 6, feats = 2, outs = 2;
    const DenseTensor xf = random_tensor({n, feats, f.cells()}, rng);
    const DenseTensor xc = downsample(xf, 2, f, c, DownsampleKind::categorical);
    std::vector<std::uint32_t> o(n);
    for (std::size_t i = 0; i < n; ++i) o[i] = static_cast<std::uint32_t>(i % outs);
    const Batch bf = make_batch(xf, std::vector<double>(n, 0.0), o);
    const Batch bc = make_batch(xc, std::vector<double>(n, 0.0), o);

    FullRankModel m = make_full_rank(outs, feats, {c.cells()}, Activation::sigmoid);
    m.w = random_tensor(m.w.shape(), rng);
    m.bias = gaussian_vector(outs, rng);
    const auto before = forward_full(m, bc);
    const auto after = forward_full(finegrain_weights(m, {build_nearest(c, f)}), bf);
    CHECK(max_rel_err(before, after) < 1e-12);
  }
}

TEST_CASE("multilinear finegraining is exact for constant weights on replicated inputs") {
  std::mt19937_64 rng(76);
  const GridSpec c = make_grid({3, 2}), f = make_grid({6, 6});
  const DenseTensor xc = random_tensor({5, 1, c.cells()}, rng);
  const DenseTensor xf = upsample_replicate(xc, 2, c, f);
  const std::vector<std::uint32_t> o(5, 0);
  FullRankModel m = make_full_rank(1, 1, {c.cells()}, Activation::identity);
  for (double& v : m.w.values()) v = -0.7;
  const auto before = forward_full(m, make_batch(xc, std::vector<double>(5, 0.0), o));
  const auto after =
      forward_full(finegrain_weights(m, {build_multilinear(c, f)}), make_batch(xf, std::vector<double>(5, 0.0), o));
  CHECK(max_rel_err(before, after) < 1e-12);
}

TEST_CASE("operator construction rejects non-refinements") {
  CHECK_THROWS_AS(build_nearest(make_grid({3}), make_grid({4})), ShapeError);
  CHECK_THROWS_AS(build_multilinear(make_grid({2, 2}), make_grid({4})), ShapeError);
  CHECK_THROWS_AS(parse_scheme("cubic"), SchemaError);
  CHECK(parse_scheme(to_string(InterpScheme::multilinear)) == InterpScheme::multilinear);
  const InterpOperator p = build_nearest(make_grid({2}), make_grid({4}));
  CHECK_THROWS_AS(apply_along_mode(DenseTensor(Shape{2, 3}), 1, p), ShapeError);
}
