#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "mrtl/cp_decomp.hpp"
#include "mrtl/data.hpp"
#include "mrtl/diagnostics.hpp"
#include "mrtl/error.hpp"
#include "test_util.hpp"

using namespace mrtl;
using namespace testutil;

namespace {

SyntheticSpec small_spec(TaskKind task, std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.task = task;
  s.samples = 400;
  s.seed = seed;
  s.ladder = make_ladder({{4, 5}, {8, 10}, {16, 20}}, {{0, 1}, {0, 1}}, 1);
  return s;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "mrtl_test_data";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST_CASE("split sizes and disjointness") {
  const Split s10 = split(10, 1);
  CHECK(s10.train.size() == 6);
  CHECK(s10.val.size() == 2);
  CHECK(s10.test.size() == 2);

  const Split s7 = split(7, 1);
  CHECK(s7.train.size() == 4);
  CHECK(s7.val.size() == 1);
  CHECK(s7.test.size() == 2);

  std::mt19937_64 rng(81);
  std::uniform_int_distribution<std::size_t> nd(5, 300);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = nd(rng);
    const Split s = split(n, trial);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == n);
    CHECK(s.train.size() + s.val.size() + s.test.size() == n);
    CHECK(*all.rbegin() == n - 1);
    CHECK(s.train == split(n, trial).train);
  }
}

TEST_CASE("downsample examples") {
  const GridSpec fine = make_grid({4}), coarse = make_grid({2});
  const DenseTensor x(Shape{1, 1, 4}, {1, 2, 3, 4});
  CHECK(downsample(x, 2, fine, coarse, DownsampleKind::categorical).values() == std::vector<double>{3, 7});
  CHECK(downsample(x, 2, fine, coarse, DownsampleKind::continuous).values() == std::vector<double>{1.5, 3.5});

  // 2D: cells of a 2x2 block sum into one coarse cell.
  const DenseTensor x2(Shape{1, 1, 4}, {1, 2, 3, 4});
  CHECK(downsample(x2, 2, make_grid({2, 2}), make_grid({1, 1}), DownsampleKind::categorical).values() ==
        std::vector<double>{10});

  CHECK_THROWS_AS(downsample(x, 2, make_grid({5}), coarse, DownsampleKind::continuous), ShapeError);
  CHECK_THROWS_AS(downsample(x, 2, fine, make_grid({3}), DownsampleKind::continuous), ShapeError);
}

TEST_CASE("downsample after replication is a projection") {
  std::mt19937_64 rng(82);
  for (int trial = 0; trial < 20; ++trial) {
    const Shape cd = random_shape(rng, 2, 1, 4);
    const GridSpec c = make_grid(cd);
    const std::size_t f0 = 1 + trial % 3, f1 = 1 + (trial / 3) % 2;
    const GridSpec f = make_grid({cd[0] * f0, cd[1] * f1});
    const DenseTensor xc = random_tensor({3, 2, c.cells()}, rng);
    const DenseTensor up = upsample_replicate(xc, 2, c, f);
    CHECK(max_rel_err(downsample(up, 2, f, c, DownsampleKind::continuous).values(), xc.values()) < 1e-14);
    DenseTensor scaled = xc;
    for (double& v : scaled.values()) v *= double(f0 * f1);
    CHECK(max_rel_err(downsample(up, 2, f, c, DownsampleKind::categorical).values(), scaled.values()) < 1e-14);
  }
}

TEST_CASE("downsampling composes across levels") {
  std::mt19937_64 rng(83);
  const GridSpec a = make_grid({2, 3}), b = make_grid({4, 6}), c = make_grid({8, 12});
  const DenseTensor x = random_tensor({2, 1, c.cells()}, rng);
  for (auto kind : {DownsampleKind::categorical, DownsampleKind::continuous}) {
    const auto direct = downsample(x, 2, c, a, kind);
    const auto two = downsample(downsample(x, 2, c, b, kind), 2, b, a, kind);
    CHECK(max_rel_err(direct.values(), two.values()) < 1e-13);
  }
}

TEST_CASE("categorical sum preserves the total per sample") {
  std::mt19937_64 rng(84);
  const GridSpec fine = make_grid({6, 4}), coarse = make_grid({3, 2});
  const DenseTensor x = random_tensor({5, 2, fine.cells()}, rng);
  const DenseTensor d = downsample(x, 2, fine, coarse, DownsampleKind::categorical);
  CHECK(std::accumulate(d.values().begin(), d.values().end(), 0.0) ==
        doctest::Approx(std::accumulate(x.values().begin(), x.values().end(), 0.0)));
}

TEST_CASE("generate: shapes, labels and per-level consistency") {
  const Synthetic s = generate(small_spec(TaskKind::classification));
  const Dataset& d = s.data;
  REQUIRE(d.x.size() == 3);
  CHECK(d.x[0]->shape() == Shape{400, 4, 20});
  CHECK(d.x[2]->shape() == Shape{400, 4, 320});
  CHECK(d.samples() == 400);
  for (double y : d.y) CHECK((y == 0.0 || y == 1.0));
  for (auto o : d.output) CHECK(o < 6);
  const double pos = std::accumulate(d.y.begin(), d.y.end(), 0.0);
  CHECK(pos > 0.0);
  CHECK(pos < 400.0);

  // Each sample has one occupied location, so coarse levels are exact sums.
  const auto& ladder = small_spec(TaskKind::classification).ladder;
  const auto re = downsample(*d.x[2], 2, ladder.levels[2][0], ladder.levels[0][0], DownsampleKind::categorical);
  CHECK(re == *d.x[0]);

  CHECK(s.truth.a.rows() == 6);
  CHECK(s.truth.c.size() == 3);
  CHECK(s.truth.c[1][0].rows() == 80);
  CHECK(s.truth.factors(2).shape() == Shape{6, 4, 320});
}

TEST_CASE("generate is deterministic and seed-sensitive") {
  const Synthetic a = generate(small_spec(TaskKind::regression, 5));
  const Synthetic b = generate(small_spec(TaskKind::regression, 5));
  const Synthetic c = generate(small_spec(TaskKind::regression, 6));
  CHECK(*a.data.x[2] == *b.data.x[2]);
  CHECK(a.data.y == b.data.y);
  CHECK(a.data.split.train == b.data.split.train);
  CHECK(a.data.y != c.data.y);
}

TEST_CASE("regression labels follow the planted model without noise") {
  const SyntheticSpec spec = small_spec(TaskKind::regression);
  const Synthetic s = generate(spec);
  const auto pred = forward_low(s.truth.model(2, Activation::identity), s.data.batch(2));
  CHECK(max_rel_err(pred, s.data.y) < 1e-12);
}

TEST_CASE("planted spatial factors are spatially autocorrelated") {
  std::mt19937_64 rng(85);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SyntheticSpec spec = small_spec(TaskKind::classification, seed);
    const Synthetic s = generate(spec);
    const Matrix& c = s.truth.c[2][0];
    for (std::size_t k = 0; k < c.cols(); ++k) {
      std::vector<double> col(c.rows());
      for (std::size_t i = 0; i < c.rows(); ++i) col[i] = c(i, k);
      CHECK(morans_i(col, spec.ladder.levels[2][0]) > 0.3);
    }
  }
}

TEST_CASE("planted rank-2 weights are recovered by CP-ALS") {
  SyntheticSpec spec = small_spec(TaskKind::classification, 9);
  spec.true_rank = 2;
  const Synthetic s = generate(spec);
  const CPFactors truth = s.truth.factors(2);
  AlsConfig c;
  c.rank = 2;
  c.max_iters = 500;
  const AlsResult r = cp_als(cp_reconstruct(truth), c);
  CHECK(align_factors(r.factors, truth).score >= 0.99);
}

TEST_CASE("bump_field peaks at its center") {
  const GridSpec g = make_grid({5});
  const auto f = bump_field(g, {{0.5}}, {2.0}, 0.1);
  CHECK(f[2] == doctest::Approx(2.0));
  CHECK(f[1] < f[2]);
  CHECK(f[1] == doctest::Approx(f[3]));
}

TEST_CASE("CSV loader") {
  const auto p = temp_file("ok.csv",
                           "# dims=2x2\n"
                           "id,output,cell_0,cell_1,cell_2,cell_3,feat_0,feat_1,label\n"
                           "0,0,1,0,0,0,0.5,2,1\n"
                           "1,1,0,0,1,0,1,-1,0\n"
                           "2,0,0,1,0,0,2,3,0\n"
                           "3,1,0,0,0,1,1,1,1\n"
                           "4,0,1,0,0,0,1,1,0\n");
  const CsvData d = load_csv_dataset(p, TaskKind::classification, 4);
  CHECK(d.grid.dims == std::vector<std::size_t>{2, 2});
  REQUIRE(d.data.x.size() == 1);
  CHECK(d.data.x[0]->shape() == Shape{5, 2, 4});
  CHECK(d.data.x[0]->at({0, 1, 0}) == 2.0);
  CHECK(d.data.x[0]->at({1, 0, 2}) == 1.0);
  CHECK(d.data.output[1] == 1);
  CHECK(d.data.y == std::vector<double>{1, 0, 0, 1, 0});
  CHECK(d.data.split.train.size() == 3);

  const auto nofeat = temp_file("nofeat.csv", "# dims=3\nid,cell_0,cell_1,cell_2,label\n0,1,2,3,0.5\n1,0,0,1,-2\n2,0,1,0,1\n3,1,1,1,0\n4,0,0,0,3\n");
  const CsvData r = load_csv_dataset(nofeat, TaskKind::regression, 0);
  CHECK(r.data.x[0]->shape() == Shape{5, 1, 3});
  CHECK(r.data.x[0]->at({0, 0, 1}) == 2.0);

  CHECK_THROWS_AS(load_csv_dataset(nofeat, TaskKind::classification, 0), SchemaError);
  CHECK_THROWS_AS(load_csv_dataset(temp_file("nodims.csv", "id,cell_0,label\n0,1,0\n"), TaskKind::regression, 0),
                  IoError);
  CHECK_THROWS_AS(load_csv_dataset(temp_file("short.csv", "# dims=2\nid,cell_0,cell_1,label\n0,1,0\n"),
                                   TaskKind::regression, 0),
                  IoError);
  CHECK_THROWS_AS(load_csv_dataset(temp_file("cells.csv", "# dims=3\nid,cell_0,cell_1,label\n0,1,0,1\n"),
                                   TaskKind::regression, 0),
                  IoError);
  CHECK_THROWS_AS(load_csv_dataset("/nonexistent/x.csv", TaskKind::regression, 0), IoError);
  std::filesystem::remove_all(p.parent_path());
}

TEST_CASE("SyntheticSpec validation") {
  SyntheticSpec s = small_spec(TaskKind::classification);
  s.true_rank = 0;
  CHECK_THROWS(s.validate());
  s = small_spec(TaskKind::classification);
  s.samples = 0;
  CHECK_THROWS(s.validate());
}
