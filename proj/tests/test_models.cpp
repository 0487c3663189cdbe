#include <cmath>

#include "doctest.h"
#include "mrtl/error.hpp"
#include "mrtl/models.hpp"
#include "test_util.hpp"

using namespace mrtl;
using namespace testutil;

namespace {

struct Instance {
  std::vector<std::size_t> spatial;
  std::size_t outputs, features, samples;
  Batch batch;
};

Instance random_instance(std::mt19937_64& rng, bool classification, std::size_t spatial_modes = 1) {
  Instance in;
  std::uniform_int_distribution<std::size_t> d(2, 4);
  in.outputs = d(rng) - 1;
  in.features = d(rng);
  in.samples = 3 + d(rng);
  for (std::size_t s = 0; s < spatial_modes; ++s) in.spatial.push_back(d(rng));
  Shape xs{in.samples, in.features};
  xs.insert(xs.end(), in.spatial.begin(), in.spatial.end());
  std::vector<double> y(in.samples);
  std::vector<std::uint32_t> out(in.samples);
  std::bernoulli_distribution coin(0.4);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(in.outputs - 1));
  for (std::size_t n = 0; n < in.samples; ++n) {
    y[n] = classification ? (coin(rng) ? 1.0 : 0.0) : gaussian_vector(1, rng)[0];
    out[n] = pick(rng);
  }
  in.batch = make_batch(random_tensor(xs, rng), y, out);
  return in;
}

FullRankModel random_full(const Instance& in, std::mt19937_64& rng, Activation act, double sd = 0.3) {
  FullRankModel m = make_full_rank(in.outputs, in.features, in.spatial, act);
  m.w = random_tensor(m.w.shape(), rng, sd);
  m.bias = gaussian_vector(in.outputs, rng, 0.2);
  return m;
}

LowRankModel random_low(const Instance& in, std::size_t k, std::mt19937_64& rng, Activation act, double sd = 0.6) {
  LowRankModel m;
  m.a = random_matrix(in.outputs, k, rng, sd);
  m.b = random_matrix(in.features, k, rng, sd);
  for (auto d : in.spatial) m.c.push_back(random_matrix(d, k, rng, sd));
  m.bias = gaussian_vector(in.outputs, rng, 0.2);
  m.activation = act;
  return m;
}

// Full-rank forward with nested loops over one spatial mode.
std::vector<double> forward_oracle(const FullRankModel& m, const Batch& b) {
  std::vector<double> out;
  const auto& x = b.x();
  for (std::size_t n = 0; n < b.samples(); ++n) {
    const std::size_t i = b.output_of(n);
    double z = m.bias[i];
    for (std::size_t f = 0; f < x.dim(1); ++f)
      for (std::size_t d = 0; d < x.dim(2); ++d) z += m.w.at({i, f, d}) * x.at({n, f, d});
    out.push_back(m.activation == Activation::sigmoid ? 1.0 / (1.0 + std::exp(-z)) : z);
  }
  return out;
}

LossSpec spec_for(bool classification, double beta = 1.7) {
  LossSpec s;
  s.kind = classification ? LossKind::weighted_ce : LossKind::mse;
  s.beta = beta;
  return s;
}

double loss_full(const FullRankModel& m, const Batch& b, const LossSpec& s) {
  return evaluate_loss(s, forward_full(m, b), b.y).value;
}
double loss_low(const LowRankModel& m, const Batch& b, const LossSpec& s) {
  return evaluate_loss(s, forward_low(m, b), b.y).value;
}

std::vector<double> flat_low(const LowRankModel& m) {
  std::vector<double> p = m.a.values();
  p.insert(p.end(), m.b.values().begin(), m.b.values().end());
  for (const auto& c : m.c) p.insert(p.end(), c.values().begin(), c.values().end());
  p.insert(p.end(), m.bias.begin(), m.bias.end());
  return p;
}

LowRankModel unflat_low(LowRankModel m, const std::vector<double>& p) {
  std::size_t o = 0;
  auto take = [&](std::vector<double>& dst) {
    std::copy(p.begin() + o, p.begin() + o + dst.size(), dst.begin());
    o += dst.size();
  };
  take(m.a.values());
  take(m.b.values());
  for (auto& c : m.c) take(c.values());
  take(m.bias);
  return m;
}

std::vector<double> flat_grad(const LowRankGrad& g) {
  std::vector<double> p = g.a.values();
  p.insert(p.end(), g.b.values().begin(), g.b.values().end());
  for (const auto& c : g.c) p.insert(p.end(), c.values().begin(), c.values().end());
  p.insert(p.end(), g.bias.begin(), g.bias.end());
  return p;
}

}  // namespace

TEST_CASE("forward_full examples") {
  std::mt19937_64 rng(41);
  const Instance in = random_instance(rng, true);
  FullRankModel m = make_full_rank(in.outputs, in.features, in.spatial, Activation::sigmoid);
  for (double p : forward_full(m, in.batch)) CHECK(p == 0.5);

  // One-hot selector with identity activation.
  FullRankModel lin = random_full(in, rng, Activation::identity);
  DenseTensor x(Shape{1, in.features, in.spatial[0]});
  x.at({0, 1, in.spatial[0] - 1}) = 1.0;
  const Batch one = make_batch(x, {0.0}, {0});
  CHECK(forward_full(lin, one)[0] == doctest::Approx(lin.w.at({0, 1, in.spatial[0] - 1}) + lin.bias[0]));

  for (int trial = 0; trial < 10; ++trial) {
    const Instance r = random_instance(rng, trial % 2 == 0);
    const FullRankModel fm = random_full(r, rng, trial % 2 == 0 ? Activation::sigmoid : Activation::identity);
    CHECK(max_rel_err(forward_full(fm, r.batch), forward_oracle(fm, r.batch)) < 1e-13);
  }
}

TEST_CASE("forward_low examples") {
  std::mt19937_64 rng(42);
  const Instance in = random_instance(rng, false);
  LowRankModel ones;
  ones.a = Matrix(in.outputs, 1, 1.0);
  ones.b = Matrix(in.features, 1, 1.0);
  ones.c = {Matrix(in.spatial[0], 1, 1.0)};
  ones.bias.assign(in.outputs, 0.0);
  ones.activation = Activation::identity;
  const auto pred = forward_low(ones, in.batch);
  const std::size_t per = in.batch.sample_size();
  for (std::size_t n = 0; n < in.samples; ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) s += in.batch.x()[n * per + j];
    CHECK(pred[n] == doctest::Approx(s).epsilon(1e-13));
  }

  LowRankModel z = random_low(in, 3, rng, Activation::sigmoid);
  z.b = Matrix(in.features, 3, 0.0);
  const auto pz = forward_low(z, in.batch);
  for (std::size_t n = 0; n < in.samples; ++n) CHECK(pz[n] == doctest::Approx(sigmoid(z.bias[in.batch.output_of(n)])));
}

TEST_CASE("forward_low equals forward_full of the reconstruction (50 instances)") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance in = random_instance(rng, trial % 2 == 0, 1 + trial % 2);
    const LowRankModel m = random_low(in, 1 + trial % 4, rng, trial % 2 == 0 ? Activation::sigmoid : Activation::identity);
    const FullRankModel f = to_full_rank(m);
    CHECK(max_rel_err(forward_low(m, in.batch), forward_full(f, in.batch)) < 1e-10);
  }
}

TEST_CASE("sigmoid predictions stay inside (0, 1)") {
  CHECK(sigmoid(800.0) <= 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  std::mt19937_64 rng(44);
  const Instance in = random_instance(rng, true);
  const FullRankModel m = random_full(in, rng, Activation::sigmoid, 0.5);
  for (double p : forward_full(m, in.batch)) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("weighted cross-entropy examples") {
  const std::vector<double> y1{1.0}, p1{1.0 - 1e-15};
  CHECK(loss_weighted_ce(p1, y1, 2.0).value < 1e-11);

  const std::vector<double> y0{0.0}, ph{0.5};
  CHECK(loss_weighted_ce(ph, y0, 7.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const std::vector<double> y{1.0, 0.0}, p{0.5, 0.5};
  const double expect = 0.5 * (3.0 * std::log(2.0) + std::log(2.0));
  CHECK(loss_weighted_ce(p, y, 3.0).value == doctest::Approx(expect).epsilon(1e-15));
  CHECK(loss_weighted_ce(p, y, 3.0).value == doctest::Approx(1.3862943611198906).epsilon(1e-15));
  // Literal form scales both terms.
  CHECK(loss_weighted_ce(p, y, 3.0, true).value == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-15));

  const std::vector<double> bad{0.5};
  CHECK_THROWS_AS(loss_weighted_ce(ph, bad, 1.0), ShapeError);
  for (double v : loss_weighted_ce(std::vector<double>{0.0, 1.0}, y, 3.0).dpred) CHECK(std::isfinite(v));
  CHECK(std::isfinite(loss_weighted_ce(std::vector<double>{0.0, 1.0}, y, 3.0).value));
}

TEST_CASE("mse examples and gradient") {
  const std::vector<double> y{1.0, -2.0, 0.5};
  CHECK(loss_mse(y, y).value == 0.0);
  const std::vector<double> p{2.0, -1.0, 1.5};
  CHECK(loss_mse(p, y).value == doctest::Approx(1.0));
  std::mt19937_64 rng(45);
  const auto a = gaussian_vector(7, rng), b = gaussian_vector(7, rng);
  double s = 0.0;
  for (std::size_t i = 0; i < 7; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const auto r = loss_mse(a, b);
  CHECK(r.value == doctest::Approx(s / 7).epsilon(1e-14));
  for (std::size_t i = 0; i < 7; ++i) CHECK(r.dpred[i] == doctest::Approx(2 * (a[i] - b[i]) / 7).epsilon(1e-14));
}

TEST_CASE("loss dpred matches finite differences") {
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> p(6), y(6);
    for (std::size_t i = 0; i < 6; ++i) p[i] = u(rng), y[i] = (i + trial) % 3 == 0 ? 1.0 : 0.0;
    const double beta = 0.5 + trial * 0.2;
    const auto r = loss_weighted_ce(p, y, beta);
    CHECK(fd_check([&](const std::vector<double>& q) { return loss_weighted_ce(q, y, beta).value; }, p, r.dpred) <= 1e-5);
    const auto lit = loss_weighted_ce(p, y, beta, true);
    CHECK(fd_check([&](const std::vector<double>& q) { return loss_weighted_ce(q, y, beta, true).value; }, p, lit.dpred) <=
          1e-5);
  }
}

TEST_CASE("class_ratio_beta is neg/pos exactly") {
  const std::vector<double> y{1, 0, 0, 1, 0, 0, 0};
  CHECK(class_ratio_beta(y) == 5.0 / 2.0);
  CHECK(class_ratio_beta(std::vector<double>{0, 0}) == 1.0);
  std::mt19937_64 rng(47);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> labels(50);
    std::size_t pos = 0;
    for (auto& v : labels) pos += (v = coin(rng) ? 1.0 : 0.0) == 1.0;
    if (pos == 0 || pos == labels.size()) continue;
    CHECK(class_ratio_beta(labels) == double(labels.size() - pos) / double(pos));
  }
}

TEST_CASE("backward: zero residual gives zero gradients") {
  std::mt19937_64 rng(48);
  Instance in = random_instance(rng, false);
  const FullRankModel m = random_full(in, rng, Activation::identity);
  in.batch.y = forward_full(m, in.batch);
  const auto pass = backward_full(m, in.batch, spec_for(false));
  CHECK(pass.loss == doctest::Approx(0.0));
  for (double g : pass.grad.w.values()) CHECK(g == doctest::Approx(0.0));
  for (double g : pass.grad.bias) CHECK(g == doctest::Approx(0.0));
}

TEST_CASE("backward: one-hot sample touches only the hot weight") {
  std::mt19937_64 rng(49);
  const Instance in = random_instance(rng, true);
  const FullRankModel m = random_full(in, rng, Activation::sigmoid);
  DenseTensor x(Shape{1, in.features, in.spatial[0]});
  x.at({0, 0, 1}) = 1.0;
  const Batch b = make_batch(x, {1.0}, {0});
  const auto pass = backward_full(m, b, spec_for(true));
  for (std::size_t i = 0; i < pass.grad.w.size(); ++i) {
    if (i == pass.grad.w.offset(std::vector<std::size_t>{0, 0, 1}))
      CHECK(pass.grad.w[i] != 0.0);
    else
      CHECK(pass.grad.w[i] == 0.0);
  }
}

TEST_CASE("full-rank gradients match finite differences (20 instances, both losses)") {
  std::mt19937_64 rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    const bool cls = trial % 2 == 0;
    const Instance in = random_instance(rng, cls, 1 + trial % 2);
    const FullRankModel m = random_full(in, rng, cls ? Activation::sigmoid : Activation::identity);
    const LossSpec s = spec_for(cls);
    const auto pass = backward_full(m, in.batch, s);
    CHECK(rel_err(pass.loss, loss_full(m, in.batch, s)) < 1e-13);

    std::vector<double> p = m.w.values();
    p.insert(p.end(), m.bias.begin(), m.bias.end());
    std::vector<double> g = pass.grad.w.values();
    g.insert(g.end(), pass.grad.bias.begin(), pass.grad.bias.end());
    auto f = [&](const std::vector<double>& q) {
      FullRankModel mm = m;
      std::copy(q.begin(), q.begin() + mm.w.size(), mm.w.values().begin());
      std::copy(q.begin() + mm.w.size(), q.end(), mm.bias.begin());
      return loss_full(mm, in.batch, s);
    };
    CHECK(fd_check(f, p, g) <= 1e-5);
  }
}

TEST_CASE("low-rank gradients match finite differences (20 instances, both losses)") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const bool cls = trial % 2 == 1;
    const Instance in = random_instance(rng, cls, 1 + trial % 2);
    const LowRankModel m = random_low(in, 1 + trial % 3, rng, cls ? Activation::sigmoid : Activation::identity);
    const LossSpec s = spec_for(cls, 2.3);
    const auto pass = backward_low(m, in.batch, s);
    CHECK(rel_err(pass.loss, loss_low(m, in.batch, s)) < 1e-13);
    auto f = [&](const std::vector<double>& q) { return loss_low(unflat_low(m, q), in.batch, s); };
    CHECK(fd_check(f, flat_low(m), flat_grad(pass.grad)) <= 1e-5);
  }
}

TEST_CASE("subset rows and sample weights") {
  std::mt19937_64 rng(52);
  Instance in = random_instance(rng, false);
  const FullRankModel m = random_full(in, rng, Activation::identity);
  const std::vector<std::size_t> rows{2, 0};
  const auto all = forward_full(m, in.batch);
  const auto sub = forward_full(m, in.batch, rows);
  CHECK(sub[0] == all[2]);
  CHECK(sub[1] == all[0]);

  in.batch.weight.assign(in.samples, 1.0);
  const double unweighted = backward_full(m, in.batch, spec_for(false)).loss;
  CHECK(unweighted == doctest::Approx(loss_full(m, in.batch, spec_for(false))));
}

TEST_CASE("shape and label errors") {
  std::mt19937_64 rng(53);
  const Instance in = random_instance(rng, true);
  FullRankModel m = make_full_rank(in.outputs, in.features + 1, in.spatial, Activation::sigmoid);
  CHECK_THROWS_AS(forward_full(m, in.batch), ShapeError);
  LowRankModel low = random_low(in, 2, rng, Activation::sigmoid);
  low.b = Matrix(in.features, 3, 0.0);
  CHECK_THROWS_AS(forward_low(low, in.batch), ShapeError);

  Batch bad = in.batch;
  bad.y[0] = 0.5;
  CHECK_THROWS_AS(bad.validate(true), ShapeError);
  CHECK_NOTHROW(bad.validate(false));
  bad.y.pop_back();
  CHECK_THROWS_AS(bad.validate(false), ShapeError);
}
