#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "mrtl/checkpoint.hpp"
#include "mrtl/error.hpp"
#include "mrtl/trainer.hpp"
#include "test_util.hpp"

using namespace mrtl;
using namespace testutil;

namespace {

struct Task {
  ResolutionLadder ladder;
  Dataset data;
};

Task small_task(TaskKind kind = TaskKind::classification, std::size_t levels = 3, std::size_t r0 = 2) {
  SyntheticSpec s;
  s.task = kind;
  s.samples = 600;
  s.seed = 11;
  std::vector<std::vector<std::size_t>> dims{{2, 2}, {4, 4}, {8, 8}};
  dims.resize(levels);
  s.ladder = make_ladder(dims, {{0, 1}, {0, 1}}, r0);
  return {s.ladder, generate(s).data};
}

TrainConfig small_cfg(TaskKind kind = TaskKind::classification) {
  TrainConfig c;
  c.task = kind;
  c.rank = 3;
  c.optim.batch_size = 64;
  c.optim.eta_full = 0.02;
  c.optim.eta_low = 0.01;
  c.criterion.patience = 2;
  c.max_epochs_per_level = 4;
  c.reg_full.lambda = 1e-5;
  c.reg_low.lambda = 1e-5;
  c.seed = 5;
  return c;
}

std::vector<EpochRecord> val_seq(std::initializer_list<double> v) {
  std::vector<EpochRecord> r;
  for (double x : v) {
    EpochRecord e;
    e.val_loss = x;
    r.push_back(e);
  }
  return r;
}

FinegrainCriterion crit(CriterionKind k, std::size_t patience) {
  FinegrainCriterion c;
  c.kind = k;
  c.patience = patience;
  return c;
}

}  // namespace

TEST_CASE("optimizer examples") {
  OptimConfig sgd;
  sgd.algorithm = OptimAlgo::minisgd;
  OptimState st;
  std::vector<double> w{1.0};
  const std::vector<double> g{1.0};  // gradient of 0.5 w^2 at w = 1
  optimizer_update(w, g, st, sgd, 0.1);
  CHECK(w[0] == doctest::Approx(0.9).epsilon(1e-15));

  for (auto algo : {OptimAlgo::minisgd, OptimAlgo::adam}) {
    OptimConfig c;
    c.algorithm = algo;
    OptimState s;
    std::vector<double> p{0.3, -2.0, 5.0};
    const auto before = p;
    const std::vector<double> zero(3, 0.0);
    optimizer_update(p, zero, s, c, 0.5);
    CHECK(p == before);
  }

  OptimConfig adam;
  OptimState as;
  std::vector<double> p{0.0};
  const std::vector<double> bad{std::nan("")};
  CHECK_THROWS_AS(optimizer_update(p, bad, as, adam, 0.1), NumericError);
}

TEST_CASE("Adam step magnitudes") {
  // Constant gradients: every step has magnitude lr up to the eps guard.
  OptimConfig c;
  OptimState s;
  std::vector<double> p(4, 0.0);
  const std::vector<double> g{0.5, -3.0, 1e-3, 20.0};
  for (int t = 0; t < 50; ++t) {
    const auto u = optimizer_update(p, g, s, c, 0.01);
    CHECK(u.max_abs_step <= 0.01 * (1.0 + 1e-6));
  }

  // Arbitrary gradients: |step| <= lr (1 - b1) / sqrt(1 - b2) per coordinate.
  std::mt19937_64 rng(91);
  OptimState r;
  std::vector<double> q(20, 0.0);
  const double bound = 0.01 * (1.0 - c.beta1) / std::sqrt(1.0 - c.beta2);
  for (int t = 0; t < 200; ++t) {
    auto grad = gaussian_vector(20, rng, t % 17 == 0 ? 100.0 : 0.1);
    const auto u = optimizer_update(q, grad, r, c, 0.01);
    CHECK(u.max_abs_step <= bound * (1.0 + 1e-9));
    for (double v : q) CHECK(std::isfinite(v));
  }
}

TEST_CASE("miniSGD on a planted quadratic contracts at rate 1 - 2 eta mu") {
  // f(w) = 0.5 sum lambda_i (w_i - w*_i)^2 with exact gradients.
  const std::vector<double> lambda{1.0, 2.0, 4.0, 7.0};
  const double eta = 0.05, mu = 1.0, gamma = 1.0 - 2.0 * eta * mu;
  std::mt19937_64 rng(92);
  const auto star = gaussian_vector(4, rng);
  std::vector<double> w(4, 0.0);
  OptimConfig c;
  c.algorithm = OptimAlgo::minisgd;
  OptimState s;
  auto dist2 = [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < 4; ++i) d += (w[i] - star[i]) * (w[i] - star[i]);
    return d;
  };
  const double d0 = dist2();
  for (int t = 1; t <= 100; ++t) {
    std::vector<double> g(4);
    for (std::size_t i = 0; i < 4; ++i) g[i] = lambda[i] * (w[i] - star[i]);
    optimizer_update(w, g, s, c, eta);
    // Closed-form iterate per coordinate.
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) expect += std::pow(1.0 - eta * lambda[i], 2 * t) * star[i] * star[i];
    CHECK(dist2() == doctest::Approx(expect).epsilon(1e-10));
    CHECK(dist2() <= std::pow(gamma, t) * d0 * (1.0 + 1e-12));
  }
}

TEST_CASE("epoch_stats examples") {
  const auto same = epoch_stats({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
  CHECK(same.grad_var == doctest::Approx(0.0));
  CHECK(same.grad_norm2 == doctest::Approx(5.0));

  const auto uniform = epoch_stats({{0.5, -0.5, 0.5, 0.5, -0.5}});
  CHECK(uniform.grad_entropy == doctest::Approx(std::log(5.0)));

  const auto two = epoch_stats({{1.0, 0.0}, {0.0, 1.0}});
  CHECK(two.grad_var == doctest::Approx(0.25));
  CHECK(two.grad_entropy == doctest::Approx(std::log(2.0)));
  CHECK(two.grad_norm2 == doctest::Approx(1.0));

  CHECK_THROWS_AS(epoch_stats({}), ShapeError);

  std::mt19937_64 rng(93);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> gs;
    for (int b = 0; b < 1 + trial % 5; ++b) gs.push_back(gaussian_vector(6, rng));
    const auto st = epoch_stats(gs);
    CHECK(st.grad_var >= 0.0);
    CHECK(st.grad_norm2 >= 0.0);
    CHECK(st.grad_entropy >= 0.0);
    CHECK(st.grad_entropy <= std::log(6.0) + 1e-12);
  }
}

TEST_CASE("should_finegrain examples") {
  const auto dec = val_seq({1.0, 0.9, 0.8, 0.7});
  CHECK_FALSE(should_finegrain(dec, crit(CriterionKind::val_loss, 1), 10));

  const auto bump = val_seq({1.0, 0.9, 0.92});
  CHECK(should_finegrain(bump, crit(CriterionKind::val_loss, 1), 10));
  CHECK_FALSE(should_finegrain(std::span(bump).first(2), crit(CriterionKind::val_loss, 1), 10));
  CHECK_FALSE(should_finegrain(bump, crit(CriterionKind::val_loss, 2), 10));

  // Increases need not be consecutive.
  const auto two = val_seq({1.0, 1.1, 0.9, 0.95, 0.8});
  CHECK(should_finegrain(two, crit(CriterionKind::val_loss, 2), 10));

  FinegrainCriterion tau = crit(CriterionKind::val_loss, 1);
  tau.tau = 0.05;
  CHECK_FALSE(should_finegrain(bump, tau, 10));
  CHECK_FALSE(should_finegrain(val_seq({1.0}), crit(CriterionKind::val_loss, 1), 10));

  std::vector<EpochRecord> g(3);
  g[0].grad_entropy = 1.0;
  g[1].grad_entropy = 1.2;
  g[2].grad_entropy = 1.1;
  CHECK(should_finegrain(g, crit(CriterionKind::grad_entropy, 1), 10));
  CHECK_FALSE(should_finegrain(g, crit(CriterionKind::grad_norm, 1), 10));
}

TEST_CASE("contraction estimate and contraction_delta criterion") {
  std::vector<double> geo;
  for (int i = 0; i < 8; ++i) geo.push_back(std::pow(0.6, i));
  CHECK(contraction_estimate(geo) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(contraction_estimate(std::vector<double>{1, 1, 1, 1, 1, 1}) < 1.0);
  CHECK_THROWS_AS(contraction_estimate(std::vector<double>{1, 0.5}), ShapeError);
  // Ratios 0.4, 0.5, 0.6, 0.5, 0.5: median 0.5.
  CHECK(contraction_estimate(std::vector<double>{1, 0.4, 0.2, 0.12, 0.06, 0.03}) == doctest::Approx(0.5));

  // Gradient descent on 0.5 mu |w|^2: estimate within 0.05 of 1 - 2 eta mu.
  const double eta = 0.01, mu = 1.0;
  std::vector<double> w(4, 3.0), deltas;
  for (int t = 0; t < 10; ++t) {
    double d2 = 0.0;
    for (double& v : w) {
      const double step = eta * mu * v;
      v -= step;
      d2 += step * step;
    }
    deltas.push_back(std::sqrt(d2));
  }
  CHECK(std::abs(contraction_estimate(deltas) - (1.0 - 2.0 * eta * mu)) <= 0.05);

  std::vector<EpochRecord> level(6);
  for (std::size_t i = 0; i < 6; ++i) level[i].delta_norm = std::pow(0.5, double(i));
  FinegrainCriterion c = crit(CriterionKind::contraction_delta, 1);
  // bound = c0 D / (g (1 - g)) = 4 c0 D at g = 0.5; last delta 1/32.
  c.c0 = 1.0 / 32.0 / 4.0 / 10.0;
  CHECK(should_finegrain(level, c, 10));
  c.c0 *= 0.99;
  CHECK_FALSE(should_finegrain(level, c, 10));
  CHECK_FALSE(should_finegrain(std::span(level).first(5), crit(CriterionKind::contraction_delta, 1), 1000000));
}

TEST_CASE("run_mrtl: structure of a three-level run") {
  const Task t = small_task();
  const RunResult r = run_mrtl(t.ladder, t.data, small_cfg());
  const auto& tr = r.trace;
  REQUIRE(tr.transitions.size() == 3);
  CHECK(tr.transitions[0].kind == "finegrain");
  CHECK(tr.transitions[1].kind == "decompose");
  CHECK(tr.transitions[2].kind == "finegrain");
  CHECK(tr.transitions[2].to_level == 2);
  CHECK(tr.cp_fit > 0.0);
  CHECK(r.model.c[0].rows() == 64);
  CHECK(r.model.a.cols() == 3);

  std::uint64_t prev_macs = 0;
  std::size_t prev_global = 0;
  for (const auto& e : tr.epochs) {
    CHECK(e.global_epoch == prev_global + 1);
    CHECK(e.macs > prev_macs);
    CHECK(e.grad_norm2 >= 0.0);
    CHECK(e.grad_var >= 0.0);
    CHECK(e.grad_entropy >= 0.0);
    CHECK(std::isfinite(e.val_loss));
    prev_macs = e.macs;
    prev_global = e.global_epoch;
  }
  for (Stage s : {Stage::full, Stage::low})
    for (std::size_t l = 0; l < 3; ++l) {
      const auto recs = tr.level_records(s, l);
      for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].epoch == i + 1);
    }
}

TEST_CASE("nearest transitions keep the validation loss continuous") {
  const Task t = small_task();
  const RunResult r = run_mrtl(t.ladder, t.data, small_cfg());
  for (const auto& tr : r.trace.transitions)
    if (tr.kind == "finegrain") CHECK(rel_err(tr.val_loss_before, tr.val_loss_after) <= 1e-9);
}

TEST_CASE("runs are deterministic") {
  const Task t = small_task(TaskKind::regression);
  const auto cfg = small_cfg(TaskKind::regression);
  const RunResult a = run_mrtl(t.ladder, t.data, cfg), b = run_mrtl(t.ladder, t.data, cfg);
  CHECK(trace_csv(a.trace) == trace_csv(b.trace));
  CHECK(a.model.a == b.model.a);
  CHECK(a.model.c[0] == b.model.c[0]);
  CHECK(a.model.bias == b.model.bias);
}

TEST_CASE("resume from a mid-run checkpoint replays the uninterrupted run") {
  const Task t = small_task();
  const auto dir = std::filesystem::temp_directory_path() / "mrtl_test_resume";
  std::filesystem::remove_all(dir);
  TrainConfig cfg = small_cfg();
  cfg.checkpoint_dir = dir;
  const RunResult full = run_mrtl(t.ladder, t.data, cfg);
  REQUIRE(std::filesystem::exists(dir / "ckpt_01_full_r2"));
  REQUIRE(std::filesystem::exists(dir / "final"));

  TrainConfig resume_cfg = small_cfg();
  const RunResult resumed = resume_mrtl(dir / "ckpt_01_full_r2", t.ladder, t.data, resume_cfg);
  CHECK(trace_csv(resumed.trace) == trace_csv(full.trace));
  CHECK(resumed.model.c[0] == full.model.c[0]);
  CHECK(resumed.model.b == full.model.b);

  const RunState fin = read_checkpoint(dir / "final");
  CHECK(fin.finished);
  CHECK(fin.low.a == full.model.a);
  std::filesystem::remove_all(dir);
}

TEST_CASE("degenerate single-level ladder is fixed-resolution training plus one decomposition") {
  const Task t = small_task(TaskKind::classification, 1, 1);
  const RunResult r = run_mrtl(t.ladder, t.data, small_cfg());
  REQUIRE(r.trace.transitions.size() == 1);
  CHECK(r.trace.transitions[0].kind == "decompose");
  CHECK(r.model.c[0].rows() == 4);

  // run_fixed on a ladder whose last level is the same grid gives the same trace.
  const Task three = small_task();
  const RunResult fixed = run_fixed(three.ladder, three.data, small_cfg());
  const RunResult direct = run_mrtl(final_level_ladder(three.ladder), final_level_data(three.data), small_cfg());
  CHECK(trace_csv(fixed.trace) == trace_csv(direct.trace));
}

TEST_CASE("random init trains a low-rank model on the final level") {
  const Task t = small_task();
  TrainConfig cfg = small_cfg();
  cfg.init = InitMode::random;
  const RunResult r = run_mrtl(t.ladder, t.data, cfg);
  CHECK(r.trace.transitions.empty());
  for (const auto& e : r.trace.epochs) {
    CHECK(e.stage == Stage::low);
    CHECK(e.level == 2);
  }

  // The budget keeps the final level running until it is spent.
  const std::uint64_t budget = r.trace.total_macs() * 3;
  cfg.mac_budget = budget;
  const RunResult longer = run_mrtl(t.ladder, t.data, cfg);
  CHECK(longer.trace.total_macs() >= budget);
}

TEST_CASE("every criterion completes a run") {
  const Task t = small_task();
  for (auto k : {CriterionKind::val_loss, CriterionKind::grad_norm, CriterionKind::grad_var, CriterionKind::grad_entropy,
                 CriterionKind::contraction_delta}) {
    TrainConfig cfg = small_cfg();
    cfg.criterion.kind = k;
    const RunResult r = run_mrtl(t.ladder, t.data, cfg);
    CHECK(r.trace.transitions.size() == 3);
    CHECK(std::isfinite(r.trace.final_val_loss()));
    for (const auto& tr : r.trace.transitions)
      CHECK((tr.trigger == to_string(k) || tr.trigger == "max_epochs"));
  }
}

TEST_CASE("learning rate decays per epoch within a stage") {
  const Task t = small_task();
  TrainConfig cfg = small_cfg();
  const RunResult r = run_mrtl(t.ladder, t.data, cfg);
  std::size_t full_idx = 0, low_idx = 0;
  for (const auto& e : r.trace.epochs) {
    const bool f = e.stage == Stage::full;
    const double eta = f ? cfg.optim.eta_full : cfg.optim.eta_low;
    const std::size_t k = f ? full_idx++ : low_idx++;
    CHECK(e.lr == doctest::Approx(eta * std::pow(cfg.optim.lr_decay_gamma, double(k))).epsilon(1e-12));
  }
}

TEST_CASE("trainer input validation") {
  const Task t = small_task();
  TrainConfig cfg = small_cfg();
  cfg.rank = 0;
  CHECK_THROWS_AS(run_mrtl(t.ladder, t.data, cfg), SchemaError);

  Dataset bad = t.data;
  bad.x.pop_back();
  CHECK_THROWS_AS(run_mrtl(t.ladder, bad, small_cfg()), ShapeError);

  Dataset labels = t.data;
  labels.y[0] = 0.3;
  CHECK_THROWS_AS(run_mrtl(t.ladder, labels, small_cfg()), ShapeError);

  CHECK_THROWS_AS(parse_criterion("loss_up"), SchemaError);
  CHECK(parse_criterion(to_string(CriterionKind::grad_var)) == CriterionKind::grad_var);
}
