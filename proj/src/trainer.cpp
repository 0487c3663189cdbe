#include "mrtl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "mrtl/checkpoint.hpp"
#include "mrtl/error.hpp"
#include "mrtl/tensor_io.hpp"

namespace mrtl {

LossSpec make_loss(const Dataset& data, const TrainConfig& cfg) {
  LossSpec l;
  if (cfg.task == TaskKind::regression) {
    l.kind = LossKind::mse;
    return l;
  }
  l.kind = LossKind::weighted_ce;
  l.literal_beta = cfg.literal_beta;
  if (cfg.beta > 0) {
    l.beta = cfg.beta;
  } else {
    std::vector<double> y;
    for (std::size_t r : data.split.train) y.push_back(data.y[r]);
    l.beta = class_ratio_beta(y);
  }
  return l;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = splitmix(seed);
  for (std::uint64_t p : parts) h = splitmix(h ^ p);
  return h;
}

void append(std::vector<double>& out, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); }

std::size_t take(std::span<double> dst, std::span<const double> src, std::size_t off) {
  if (off + dst.size() > src.size()) throw ShapeError("unflatten: parameter vector too short");
  std::copy(src.begin() + static_cast<std::ptrdiff_t>(off), src.begin() + static_cast<std::ptrdiff_t>(off + dst.size()),
            dst.begin());
  return off + dst.size();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::pair<std::size_t, const SpatialKernel*>> spatial_list(const RegContext& reg, std::size_t first_mode,
                                                                       std::size_t count) {
  std::vector<std::pair<std::size_t, const SpatialKernel*>> out;
  if (reg.kernels.empty()) return out;
  if (reg.kernels.size() != count) throw ShapeError("regularizer: one kernel per spatial mode required");
  for (std::size_t s = 0; s < count; ++s) out.emplace_back(first_mode + s, reg.kernels[s]);
  return out;
}

std::vector<double> forward(const FullRankModel& m, const Batch& b, Rows rows, std::uint64_t* macs) {
  return forward_full(m, b, rows, macs);
}
std::vector<double> forward(const LowRankModel& m, const Batch& b, Rows rows, std::uint64_t* macs) {
  return forward_low(m, b, rows, macs);
}

template <class Model>
StepResult step_impl(Model& m, const Batch& b, Rows rows, OptimState& st, const OptimConfig& cfg, double lr,
                     const LossSpec& loss, const RegContext& reg, std::uint64_t* macs) {
  auto [ov, grad] = objective_gradient(m, b, loss, rows, reg, macs);
  std::vector<double> p = flatten(m);
  StepResult r;
  r.update = optimizer_update(p, grad, st, cfg, lr);
  unflatten(m, p);
  r.loss = ov.loss;
  r.objective = ov.value;
  r.grad = std::move(grad);
  return r;
}

// ---- run driver -----------------------------------------------------------

struct Context {
  const ResolutionLadder& ladder;
  const Dataset& data;
  const TrainConfig& cfg;
  LossSpec loss;
  std::size_t outputs = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double wall_offset = 0.0;
  // kernels[stage][level][mode]
  std::vector<std::unique_ptr<SpatialKernel>> owned;
  std::vector<std::vector<std::vector<const SpatialKernel*>>> kernels{2};

  Context(const ResolutionLadder& l, const Dataset& d, const TrainConfig& c) : ladder(l), data(d), cfg(c) {}

  double wall() const {
    return wall_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  RegContext reg(Stage s, std::size_t level) {
    const RegConfig& rc = s == Stage::full ? cfg.reg_full : cfg.reg_low;
    RegContext out{rc, {}};
    if (rc.lambda * rc.spatial_weight == 0.0) return out;
    auto& per_level = kernels[s == Stage::full ? 0 : 1];
    if (per_level.size() < ladder.size()) per_level.resize(ladder.size());
    auto& ks = per_level[level];
    if (ks.empty()) {
      for (const auto& g : ladder.levels[level]) {
        owned.push_back(std::make_unique<SpatialKernel>(g, rc.sigma, rc.sparsify_below));
        ks.push_back(owned.back().get());
      }
    }
    out.kernels = ks;
    return out;
  }

  double eta(Stage s) const { return s == Stage::full ? cfg.optim.eta_full : cfg.optim.eta_low; }
};

template <class Model>
double validation_loss(const Model& m, const Batch& b, const Context& ctx, std::uint64_t& macs) {
  const auto& rows = ctx.data.split.val;
  if (rows.empty()) return 0.0;
  const auto pred = forward(m, b, rows, &macs);
  std::vector<double> y;
  y.reserve(rows.size());
  for (std::size_t r : rows) y.push_back(ctx.data.y[r]);
  return evaluate_loss(ctx.loss, pred, y).value;
}

template <class Model>
EpochRecord run_epoch(Model& m, RunState& s, Context& ctx, OptimState& st) {
  const TrainConfig& cfg = ctx.cfg;
  const Batch batch = ctx.data.batch(s.level);

  const auto prior = s.trace.level_records(s.stage, s.level);
  EpochRecord rec;
  rec.stage = s.stage;
  rec.level = s.level;
  rec.epoch = prior.size() + 1;
  rec.global_epoch = s.trace.epochs.size() + 1;
  rec.lr = ctx.eta(s.stage) * std::pow(cfg.optim.lr_decay_gamma, static_cast<double>(s.stage_epochs));

  std::vector<std::size_t> rows = ctx.data.split.train;
  std::mt19937_64 rng(mix(cfg.seed, {s.stage == Stage::full ? 1u : 2u, s.level, rec.epoch}));
  std::shuffle(rows.begin(), rows.end(), rng);

  const RegContext reg = ctx.reg(s.stage, s.level);
  const std::vector<double> p0 = flatten(m);
  GradientAccumulator acc;
  double loss_sum = 0.0, obj_sum = 0.0;
  const std::size_t bs = cfg.optim.batch_size;
  for (std::size_t i = 0; i < rows.size(); i += bs) {
    const std::size_t end = std::min(rows.size(), i + bs);
    const Rows chunk(rows.data() + i, end - i);
    const StepResult r = step(m, batch, chunk, st, cfg.optim, rec.lr, ctx.loss, reg, &s.macs);
    acc.add(r.grad);
    loss_sum += r.loss;
    obj_sum += r.objective;
  }
  if (acc.count() == 0) throw ShapeError("training split is empty");
  const EpochGradStats gs = acc.finish();
  rec.train_loss = loss_sum / static_cast<double>(acc.count());
  rec.objective = obj_sum / static_cast<double>(acc.count());
  rec.grad_norm2 = gs.grad_norm2;
  rec.grad_var = gs.grad_var;
  rec.grad_entropy = gs.grad_entropy;
  const std::vector<double> p1 = flatten(m);
  double d2 = 0.0;
  for (std::size_t i = 0; i < p1.size(); ++i) d2 += (p1[i] - p0[i]) * (p1[i] - p0[i]);
  rec.delta_norm = std::sqrt(d2);
  rec.val_loss = validation_loss(m, batch, ctx, s.macs);
  if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss))
    throw NumericError("non-finite loss at " + to_string(s.stage) + " level " + std::to_string(s.level + 1) +
                       " epoch " + std::to_string(rec.epoch));
  rec.macs = s.macs;
  rec.wall_seconds = ctx.wall();
  ++s.stage_epochs;
  return rec;
}

std::string checkpoint_name(const RunState& s) {
  std::ostringstream os;
  os << "ckpt_" << (s.trace.transitions.size() < 10 ? "0" : "") << s.trace.transitions.size() << "_"
     << to_string(s.stage) << "_r" << (s.level + 1);
  return os.str();
}

void maybe_checkpoint(RunState& s, const Context& ctx) {
  if (ctx.cfg.checkpoint_dir.empty()) return;
  s.grids = ctx.ladder.levels[s.level];
  write_checkpoint(ctx.cfg.checkpoint_dir / (s.finished ? std::string("final") : checkpoint_name(s)), s);
}

LowRankModel random_low_rank(const Context& ctx, std::size_t level) {
  std::mt19937_64 rng(mix(ctx.cfg.seed, {3u}));
  std::normal_distribution<double> normal(0.0, ctx.cfg.random_init_scale);
  const std::size_t k = ctx.cfg.rank;
  LowRankModel m;
  auto fill = [&](std::size_t rows) {
    Matrix f(rows, k);
    for (double& v : f.data()) v = normal(rng);
    return f;
  };
  m.a = fill(ctx.outputs);
  m.b = fill(ctx.data.x.front()->dim(1));
  for (const auto& g : ctx.ladder.levels[level]) m.c.push_back(fill(g.cells()));
  m.bias.assign(ctx.outputs, 0.0);
  m.activation = ctx.cfg.activation();
  return m;
}

// Adam moments follow their parameters through P (without the scale
// correction); the step counter continues.
template <class Model>
void finegrain_moments(OptimState& st, Model coarse, std::vector<InterpOperator> ops) {
  if (st.m.empty()) return;
  for (auto& op : ops) op.scale_correction = 1.0;
  unflatten(coarse, st.m);
  st.m = flatten(finegrain_weights(coarse, ops));
  unflatten(coarse, st.v);
  st.v = flatten(finegrain_weights(coarse, ops));
}

RunResult drive(RunState s, Context& ctx) {
  const TrainConfig& cfg = ctx.cfg;
  const std::size_t last = ctx.ladder.size() - 1;
  const std::size_t r0 = ctx.ladder.r0 - 1;
  OptimState& st = s.optim;

  while (!s.finished) {
    const bool full = s.stage == Stage::full;
    EpochRecord rec = full ? run_epoch(s.full, s, ctx, st) : run_epoch(s.low, s, ctx, st);
    s.trace.epochs.push_back(rec);
    const auto level = s.trace.level_records(s.stage, s.level);
    const std::size_t n = level.size();
    const bool final_level = !full && s.level == last;

    bool fire = n >= std::max<std::size_t>(2, cfg.min_epochs_per_level) &&
                should_finegrain(level, cfg.criterion, ctx.ladder.total_cells(s.level));
    bool cap = n >= cfg.max_epochs_per_level;
    if (final_level && cfg.mac_budget > 0 && s.macs < cfg.mac_budget) {
      fire = false;
      cap = n >= 20 * cfg.max_epochs_per_level;
    }
    if (!fire && !cap) continue;

    const std::string trigger = fire ? to_string(cfg.criterion.kind) : std::string("max_epochs");
    s.trace.epochs.back().event = trigger;

    if (final_level) {
      s.finished = true;
      maybe_checkpoint(s, ctx);
      break;
    }

    TransitionRecord tr;
    tr.stage = s.stage;
    tr.from_level = s.level;
    tr.trigger = trigger;
    tr.val_loss_before = rec.val_loss;
    if (full && s.level == r0) {
      AlsConfig als{cfg.rank, cfg.cp_max_iters, cfg.cp_fit_tol, mix(cfg.seed, {4u})};
      const AlsResult res = cp_als(s.full.w, als);
      s.trace.cp_fit = res.fit;
      if (res.fit < cfg.cp_fit_floor) {
        s.trace.warnings.push_back("cp_fit " + format_double(res.fit) + " below floor " +
                                   format_double(cfg.cp_fit_floor));
      }
      s.low = low_rank_from_cp(res.factors, s.full.bias, s.full.activation);
      st.reset(0);
      s.full = FullRankModel{};
      s.stage = Stage::low;
      s.stage_epochs = 0;
      tr.kind = "decompose";
    } else {
      const auto ops = build_level_operators(cfg.scheme, ctx.ladder.levels[s.level], ctx.ladder.levels[s.level + 1]);
      if (full) {
        finegrain_moments(st, s.full, ops);
        s.full = finegrain_weights(s.full, ops);
      } else {
        finegrain_moments(st, s.low, ops);
        s.low = finegrain_weights(s.low, ops);
      }
      ++s.level;
      tr.kind = "finegrain";
    }
    tr.to_level = s.level;
    const Batch b = ctx.data.batch(s.level);
    tr.val_loss_after = s.stage == Stage::full ? validation_loss(s.full, b, ctx, s.macs)
                                               : validation_loss(s.low, b, ctx, s.macs);
    s.trace.transitions.push_back(tr);
    maybe_checkpoint(s, ctx);
  }
  return RunResult{s.low, s.trace};
}

void check_inputs(const ResolutionLadder& ladder, const Dataset& data, const TrainConfig& cfg) {
  ladder.validate();
  cfg.validate();
  if (data.x.size() != ladder.size())
    throw ShapeError("dataset has " + std::to_string(data.x.size()) + " resolutions, ladder has " +
                     std::to_string(ladder.size()));
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    const auto& x = *data.x[r];
    if (x.order() != 2 + ladder.spatial_modes()) throw ShapeError("dataset level " + std::to_string(r) + " has wrong order");
    if (x.dim(0) != data.samples()) throw ShapeError("dataset level " + std::to_string(r) + " sample count mismatch");
    for (std::size_t s = 0; s < ladder.spatial_modes(); ++s)
      if (x.dim(2 + s) != ladder.levels[r][s].cells())
        throw ShapeError("dataset level " + std::to_string(r) + " does not match the ladder on mode " + std::to_string(2 + s));
  }
  if (cfg.task == TaskKind::classification)
    for (double v : data.y)
      if (v != 0.0 && v != 1.0) throw ShapeError("classification labels must be 0 or 1");
}

std::size_t infer_outputs(const Dataset& data, const TrainConfig& cfg) {
  std::size_t mx = 0;
  for (auto o : data.output) mx = std::max<std::size_t>(mx, o);
  const std::size_t need = data.output.empty() ? 1 : mx + 1;
  if (cfg.outputs == 0) return need;
  if (cfg.outputs < need) throw ShapeError("data refers to output " + std::to_string(mx) + " beyond the configured count");
  return cfg.outputs;
}

}  // namespace

// ---- criteria and statistics ------------------------------------------------

CriterionKind parse_criterion(const std::string& s) {
  if (s == "val_loss") return CriterionKind::val_loss;
  if (s == "grad_norm") return CriterionKind::grad_norm;
  if (s == "grad_var") return CriterionKind::grad_var;
  if (s == "grad_entropy") return CriterionKind::grad_entropy;
  if (s == "contraction_delta") return CriterionKind::contraction_delta;
  throw SchemaError("unknown finegrain criterion '" + s + "'");
}

std::string to_string(CriterionKind k) {
  switch (k) {
    case CriterionKind::val_loss: return "val_loss";
    case CriterionKind::grad_norm: return "grad_norm";
    case CriterionKind::grad_var: return "grad_var";
    case CriterionKind::grad_entropy: return "grad_entropy";
    case CriterionKind::contraction_delta: return "contraction_delta";
  }
  return "?";
}

void FinegrainCriterion::validate() const {
  if (patience < 1) throw SchemaError("criterion: patience must be at least 1");
  if (kind == CriterionKind::contraction_delta && !(c0 > 0)) throw SchemaError("criterion: c0 must be positive");
  if (!std::isfinite(tau)) throw SchemaError("criterion: tau must be finite");
}

std::string to_string(Stage s) { return s == Stage::full ? "full" : "low"; }

Stage parse_stage(const std::string& s) {
  if (s == "full") return Stage::full;
  if (s == "low") return Stage::low;
  throw SchemaError("unknown stage '" + s + "'");
}

double EpochRecord::statistic(CriterionKind k) const {
  switch (k) {
    case CriterionKind::val_loss: return val_loss;
    case CriterionKind::grad_norm: return grad_norm2;
    case CriterionKind::grad_var: return grad_var;
    case CriterionKind::grad_entropy: return grad_entropy;
    case CriterionKind::contraction_delta: return delta_norm;
  }
  return 0.0;
}

std::vector<EpochRecord> TrainingTrace::level_records(Stage s, std::size_t level) const {
  std::vector<EpochRecord> out;
  for (const auto& e : epochs)
    if (e.stage == s && e.level == level) out.push_back(e);
  return out;
}

std::string trace_csv(const TrainingTrace& t) {
  std::ostringstream os;
  os << "stage,level,resolution,epoch,global_epoch,lr,train_loss,objective,val_loss,grad_norm2,grad_var,"
        "grad_entropy,delta_norm,macs,event\n";
  for (const auto& e : t.epochs) {
    os << to_string(e.stage) << ',' << e.level << ',' << e.level + 1 << ',' << e.epoch << ',' << e.global_epoch << ','
       << format_double(e.lr) << ',' << format_double(e.train_loss) << ',' << format_double(e.objective) << ','
       << format_double(e.val_loss) << ',' << format_double(e.grad_norm2) << ',' << format_double(e.grad_var) << ','
       << format_double(e.grad_entropy) << ',' << format_double(e.delta_norm) << ',' << e.macs << ',' << e.event
       << '\n';
  }
  return os.str();
}

void GradientAccumulator::add(std::span<const double> g) {
  if (count_ == 0) {
    sum_.assign(g.size(), 0.0);
    sum_sq_.assign(g.size(), 0.0);
  } else if (g.size() != sum_.size()) {
    throw ShapeError("GradientAccumulator: gradient size changed within an epoch");
  }
  double n2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    sum_[i] += g[i];
    sum_sq_[i] += g[i] * g[i];
    n2 += g[i] * g[i];
  }
  norm2_sum_ += n2;
  ++count_;
}

EpochGradStats GradientAccumulator::finish() const {
  if (count_ == 0) throw ShapeError("epoch_stats: no minibatches in the epoch");
  const double n = static_cast<double>(count_);
  EpochGradStats s;
  s.grad_norm2 = norm2_sum_ / n;
  double var = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    const double mean = sum_[i] / n;
    var += std::max(0.0, sum_sq_[i] / n - mean * mean);
    abs_sum += std::abs(mean);
  }
  s.grad_var = sum_.empty() ? 0.0 : var / static_cast<double>(sum_.size());
  if (abs_sum > 0) {
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const double p = std::abs(sum_[i] / n) / abs_sum;
      if (p > 0) s.grad_entropy -= p * std::log(p);
    }
  }
  return s;
}

EpochGradStats epoch_stats(const std::vector<std::vector<double>>& minibatch_grads) {
  GradientAccumulator acc;
  for (const auto& g : minibatch_grads) acc.add(g);
  return acc.finish();
}

double contraction_estimate(std::span<const double> deltas, std::size_t window) {
  if (window < 1) throw ShapeError("contraction_estimate: window must be at least 1");
  if (deltas.size() < window + 1)
    throw ShapeError("contraction_estimate: need " + std::to_string(window + 1) + " delta norms, got " +
                     std::to_string(deltas.size()));
  std::vector<double> ratios;
  for (std::size_t i = deltas.size() - window; i < deltas.size(); ++i)
    ratios.push_back(deltas[i - 1] > 0 ? deltas[i] / deltas[i - 1] : 1.0);
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  return std::clamp(median(std::move(ratios)), lo, hi);
}

bool should_finegrain(std::span<const EpochRecord> level, const FinegrainCriterion& c, std::size_t level_cells) {
  if (level.size() < 2) return false;
  if (c.kind == CriterionKind::contraction_delta) {
    constexpr std::size_t window = 5;
    if (level.size() < window + 1) return false;
    std::vector<double> deltas;
    for (const auto& e : level) deltas.push_back(e.delta_norm);
    const double g = contraction_estimate(deltas, window);
    const double bound = c.c0 * static_cast<double>(level_cells) / (g * (1.0 - g));
    return deltas.back() <= bound;
  }
  std::size_t count = 0;
  for (std::size_t i = 1; i < level.size(); ++i)
    if (level[i].statistic(c.kind) - level[i - 1].statistic(c.kind) > c.tau) ++count;
  return count >= c.patience;
}

// ---- configuration ------------------------------------------------------------

Activation TrainConfig::activation() const {
  return task == TaskKind::classification ? Activation::sigmoid : Activation::identity;
}

void TrainConfig::validate() const {
  if (rank < 1) throw SchemaError("training: rank must be at least 1");
  if (beta < 0) throw SchemaError("training: beta must be nonnegative");
  optim.validate();
  reg_full.validate();
  reg_low.validate();
  criterion.validate();
  if (max_epochs_per_level < 1) throw SchemaError("training: max_epochs_per_level must be at least 1");
  if (min_epochs_per_level > max_epochs_per_level)
    throw SchemaError("training: min_epochs_per_level exceeds max_epochs_per_level");
  if (cp_max_iters < 1 || !(cp_fit_tol > 0)) throw SchemaError("training: invalid CP settings");
  if (!(random_init_scale > 0)) throw SchemaError("training: random_init_scale must be positive");
}

// ---- parameters ----------------------------------------------------------------

std::vector<double> flatten(const FullRankModel& m) {
  std::vector<double> p;
  p.reserve(m.w.size() + m.bias.size());
  append(p, m.w.data());
  append(p, m.bias);
  return p;
}

std::vector<double> flatten(const LowRankModel& m) {
  std::vector<double> p;
  append(p, m.a.data());
  append(p, m.b.data());
  for (const auto& c : m.c) append(p, c.data());
  append(p, m.bias);
  return p;
}

void unflatten(FullRankModel& m, std::span<const double> p) {
  std::size_t off = take(m.w.data(), p, 0);
  off = take(m.bias, p, off);
  if (off != p.size()) throw ShapeError("unflatten: parameter vector too long");
}

void unflatten(LowRankModel& m, std::span<const double> p) {
  std::size_t off = take(m.a.data(), p, 0);
  off = take(m.b.data(), p, off);
  for (auto& c : m.c) off = take(c.data(), p, off);
  off = take(m.bias, p, off);
  if (off != p.size()) throw ShapeError("unflatten: parameter vector too long");
}

std::pair<ObjectiveValue, std::vector<double>> objective_gradient(const FullRankModel& m, const Batch& b,
                                                                  const LossSpec& loss, Rows rows,
                                                                  const RegContext& reg, std::uint64_t* macs) {
  FullRankPass pass = backward_full(m, b, loss, rows, macs);
  std::vector<double> g;
  g.reserve(m.w.size() + m.bias.size());
  append(g, pass.grad.w.data());
  append(g, pass.grad.bias);
  std::vector<RegBlock> blocks;
  blocks.push_back({m.w.data(), m.w.shape(), std::span<double>(g.data(), m.w.size()),
                    spatial_list(reg, 2, m.spatial_modes())});
  const ObjectiveValue ov = objective(pass.loss, blocks, reg.cfg);
  if (macs) *macs += ov.macs;
  return {ov, std::move(g)};
}

std::pair<ObjectiveValue, std::vector<double>> objective_gradient(const LowRankModel& m, const Batch& b,
                                                                  const LossSpec& loss, Rows rows,
                                                                  const RegContext& reg, std::uint64_t* macs) {
  LowRankPass pass = backward_low(m, b, loss, rows, macs);
  std::vector<double> g;
  append(g, pass.grad.a.data());
  append(g, pass.grad.b.data());
  for (const auto& c : pass.grad.c) append(g, c.data());
  append(g, pass.grad.bias);

  const auto spatial = spatial_list(reg, 0, m.c.size());
  std::vector<RegBlock> blocks;
  std::size_t off = 0;
  auto add_block = [&](const Matrix& p, std::vector<std::pair<std::size_t, const SpatialKernel*>> sp) {
    blocks.push_back({p.data(), Shape{p.rows(), p.cols()}, std::span<double>(g.data() + off, p.size()), std::move(sp)});
    off += p.size();
  };
  add_block(m.a, {});
  add_block(m.b, {});
  for (std::size_t s = 0; s < m.c.size(); ++s) {
    std::vector<std::pair<std::size_t, const SpatialKernel*>> sp;
    if (!spatial.empty()) sp.emplace_back(0, spatial[s].second);
    add_block(m.c[s], std::move(sp));
  }
  const ObjectiveValue ov = objective(pass.loss, blocks, reg.cfg);
  if (macs) *macs += ov.macs;
  return {ov, std::move(g)};
}

StepResult step(FullRankModel& m, const Batch& b, Rows rows, OptimState& st, const OptimConfig& cfg, double lr,
                const LossSpec& loss, const RegContext& reg, std::uint64_t* macs) {
  return step_impl(m, b, rows, st, cfg, lr, loss, reg, macs);
}

StepResult step(LowRankModel& m, const Batch& b, Rows rows, OptimState& st, const OptimConfig& cfg, double lr,
                const LossSpec& loss, const RegContext& reg, std::uint64_t* macs) {
  return step_impl(m, b, rows, st, cfg, lr, loss, reg, macs);
}

// ---- runs ------------------------------------------------------------------------

RunResult run_mrtl(const ResolutionLadder& ladder, const Dataset& data, const TrainConfig& cfg) {
  check_inputs(ladder, data, cfg);
  Context ctx(ladder, data, cfg);
  ctx.loss = make_loss(data, cfg);
  ctx.outputs = infer_outputs(data, cfg);
  RunState s;
  if (cfg.init == InitMode::random) {
    // Standalone low-rank model at the finest level.
    s.stage = Stage::low;
    s.level = ladder.size() - 1;
    s.low = random_low_rank(ctx, s.level);
  } else {
    std::vector<std::size_t> spatial;
    for (const auto& g : ladder.levels.front()) spatial.push_back(g.cells());
    s.full = make_full_rank(ctx.outputs, data.x.front()->dim(1), spatial, cfg.activation());
  }
  return drive(std::move(s), ctx);
}

ResolutionLadder final_level_ladder(const ResolutionLadder& ladder) {
  ladder.validate();
  ResolutionLadder out;
  out.levels = {ladder.levels.back()};
  out.r0 = 1;
  return out;
}

Dataset final_level_data(const Dataset& data) {
  Dataset out = data;
  out.x = {data.x.back()};
  return out;
}

RunResult run_fixed(const ResolutionLadder& ladder, const Dataset& data, const TrainConfig& cfg) {
  return run_mrtl(final_level_ladder(ladder), final_level_data(data), cfg);
}

RunResult resume_mrtl(const std::filesystem::path& checkpoint, const ResolutionLadder& ladder, const Dataset& data,
                      const TrainConfig& cfg) {
  check_inputs(ladder, data, cfg);
  RunState s = read_checkpoint(checkpoint);
  if (s.level >= ladder.size()) throw ShapeError("checkpoint level lies outside the ladder");
  Context ctx(ladder, data, cfg);
  ctx.loss = make_loss(data, cfg);
  ctx.outputs = infer_outputs(data, cfg);
  if (!s.trace.epochs.empty()) ctx.wall_offset = s.trace.epochs.back().wall_seconds;
  if (s.finished) return RunResult{s.low, s.trace};
  return drive(std::move(s), ctx);
}

}  // namespace mrtl
