#include "mrtl/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrtl/error.hpp"
#include "mrtl/parallel.hpp"

namespace mrtl {
namespace {

constexpr std::size_t kChunk = 64;

std::vector<std::size_t> resolve_rows(const Batch& b, Rows rows) {
  if (!rows.empty()) {
    for (std::size_t r : rows)
      if (r >= b.samples()) throw ShapeError("row index " + std::to_string(r) + " out of range");
    return {rows.begin(), rows.end()};
  }
  std::vector<std::size_t> all(b.samples());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

std::size_t chunks_for(std::size_t n) { return (n + kChunk - 1) / kChunk; }

double activate(Activation a, double z) { return a == Activation::sigmoid ? sigmoid(z) : z; }
double activation_slope(Activation a, double p) { return a == Activation::sigmoid ? p * (1.0 - p) : 1.0; }

void check_full(const FullRankModel& m, const Batch& b) {
  if (!b.input) throw ShapeError("forward_full: batch has no inputs");
  if (m.w.order() < 2) throw ShapeError("FullRankModel: weight tensor needs output and feature modes");
  if (b.x().order() != m.w.order()) throw ShapeError("forward_full: input order does not match the weight tensor");
  for (std::size_t j = 1; j < m.w.order(); ++j)
    if (b.x().dim(j) != m.w.dim(j)) throw ShapeError("forward_full: size mismatch on mode " + std::to_string(j));
  if (m.bias.size() != m.outputs()) throw ShapeError("FullRankModel: bias length differs from output count");
}

Shape sample_shape(const Batch& b) { return Shape(b.x().shape().begin() + 1, b.x().shape().end()); }

// out[r, k] += sum over the other modes of x[..., r, ...] * kr[rest, k]
void sample_mttkrp(const double* x, const Shape& shape, std::size_t mode, const Matrix& kr, double* out) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t j = 0; j < mode; ++j) outer *= shape[j];
  for (std::size_t j = mode + 1; j < shape.size(); ++j) inner *= shape[j];
  const std::size_t rows = shape[mode];
  const std::size_t k = kr.cols();
  const double* krd = kr.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = x + (o * rows + r) * inner;
      double* dst = out + r * k;
      for (std::size_t i = 0; i < inner; ++i) {
        const double v = src[i];
        const double* krow = krd + (o * inner + i) * k;
        for (std::size_t c = 0; c < k; ++c) dst[c] += v * krow[c];
      }
    }
}

// Khatri-Rao of the sample-mode factors [B, C1, ..., CS] without `skip`.
Matrix kr_without(const LowRankModel& m, std::size_t skip) {
  std::vector<Matrix> others;
  if (skip != 0) others.push_back(m.b);
  for (std::size_t s = 0; s < m.c.size(); ++s)
    if (skip != s + 1) others.push_back(m.c[s]);
  if (others.empty()) return Matrix(1, m.rank(), 1.0);
  return khatri_rao(others);
}

void check_low(const LowRankModel& m, const Batch& b) {
  if (!b.input) throw ShapeError("forward_low: batch has no inputs");
  m.validate();
  if (b.x().order() != m.c.size() + 2) throw ShapeError("forward_low: input order does not match the model");
  if (b.x().dim(1) != m.b.rows()) throw ShapeError("forward_low: size mismatch on mode 1");
  for (std::size_t s = 0; s < m.c.size(); ++s)
    if (b.x().dim(2 + s) != m.c[s].rows()) throw ShapeError("forward_low: size mismatch on mode " + std::to_string(2 + s));
}

std::uint32_t checked_output(const Batch& b, std::size_t n, std::size_t outputs) {
  const std::uint32_t o = b.output_of(n);
  if (o >= outputs) throw ShapeError("sample " + std::to_string(n) + " refers to output " + std::to_string(o));
  return o;
}

std::vector<double> gather(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  if (v.empty()) return out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace

Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw SchemaError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "identity"; }

LossKind parse_loss(const std::string& s) {
  if (s == "weighted_ce") return LossKind::weighted_ce;
  if (s == "mse") return LossKind::mse;
  throw SchemaError("unknown loss '" + s + "'");
}

std::string to_string(LossKind k) { return k == LossKind::weighted_ce ? "weighted_ce" : "mse"; }

Batch make_batch(DenseTensor x, std::vector<double> y, std::vector<std::uint32_t> output, std::vector<double> weight) {
  return Batch{std::make_shared<const DenseTensor>(std::move(x)), std::move(y), std::move(output), std::move(weight)};
}

void Batch::validate(bool classification) const {
  if (!input || x().order() < 2) throw ShapeError("Batch: inputs need a sample mode and a feature mode");
  if (y.size() != samples()) throw ShapeError("Batch: label count differs from sample count");
  if (!output.empty() && output.size() != samples()) throw ShapeError("Batch: output index count differs from sample count");
  if (!weight.empty() && weight.size() != samples()) throw ShapeError("Batch: weight count differs from sample count");
  if (classification)
    for (double v : y)
      if (v != 0.0 && v != 1.0) throw ShapeError("Batch: classification labels must be 0 or 1");
}

Shape LowRankModel::weight_shape() const {
  Shape s{a.rows(), b.rows()};
  for (const auto& m : c) s.push_back(m.rows());
  return s;
}

CPFactors LowRankModel::factors() const {
  CPFactors f;
  f.factors.push_back(a);
  f.factors.push_back(b);
  for (const auto& m : c) f.factors.push_back(m);
  return f;
}

void LowRankModel::validate() const {
  const std::size_t k = a.cols();
  if (k == 0) throw ShapeError("LowRankModel: rank must be at least 1");
  if (b.cols() != k) throw ShapeError("LowRankModel: feature factor rank mismatch");
  for (std::size_t s = 0; s < c.size(); ++s)
    if (c[s].cols() != k) throw ShapeError("LowRankModel: spatial factor " + std::to_string(s) + " rank mismatch");
  if (bias.size() != a.rows()) throw ShapeError("LowRankModel: bias length differs from output count");
}

FullRankModel make_full_rank(std::size_t outputs, std::size_t features, const std::vector<std::size_t>& spatial,
                             Activation act) {
  Shape s{outputs, features};
  s.insert(s.end(), spatial.begin(), spatial.end());
  return FullRankModel{DenseTensor(s), std::vector<double>(outputs, 0.0), act};
}

LowRankModel low_rank_from_cp(const CPFactors& f, std::vector<double> bias, Activation act) {
  const std::size_t k = f.rank();
  if (f.factors.size() < 2) throw ShapeError("low_rank_from_cp: need output and feature factors");
  // Spread each component's magnitude evenly over the modes.
  const double n = static_cast<double>(f.factors.size());
  std::vector<Matrix> fs = f.factors;
  for (std::size_t c = 0; c < k; ++c) {
    const double lam = f.lambda(c);
    const double root = std::pow(std::abs(lam), 1.0 / n);
    for (std::size_t m = 0; m < fs.size(); ++m) {
      const double s = (m == 0 && lam < 0) ? -root : root;
      for (std::size_t i = 0; i < fs[m].rows(); ++i) fs[m](i, c) *= s;
    }
  }
  LowRankModel out;
  out.a = fs[0];
  out.b = fs[1];
  out.c.assign(fs.begin() + 2, fs.end());
  out.bias = std::move(bias);
  out.activation = act;
  out.validate();
  return out;
}

FullRankModel to_full_rank(const LowRankModel& m) {
  return FullRankModel{cp_reconstruct(m.factors()), m.bias, m.activation};
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> forward_full(const FullRankModel& m, const Batch& b, Rows rows_in, std::uint64_t* macs) {
  check_full(m, b);
  const auto rows = resolve_rows(b, rows_in);
  const std::size_t p = b.sample_size();
  std::vector<double> pred(rows.size());
  parallel_for(chunks_for(rows.size()), [&](std::size_t ch) {
    const std::size_t end = std::min(rows.size(), (ch + 1) * kChunk);
    for (std::size_t j = ch * kChunk; j < end; ++j) {
      const std::size_t n = rows[j];
      const std::uint32_t o = checked_output(b, n, m.outputs());
      const double* w = m.w.data().data() + o * p;
      const double* x = b.x().data().data() + n * p;
      double z = m.bias[o];
      for (std::size_t i = 0; i < p; ++i) z += w[i] * x[i];
      pred[j] = activate(m.activation, z);
    }
  });
  if (macs) *macs += static_cast<std::uint64_t>(rows.size()) * p;
  return pred;
}

std::vector<double> forward_low(const LowRankModel& m, const Batch& b, Rows rows_in, std::uint64_t* macs) {
  check_low(m, b);
  const auto rows = resolve_rows(b, rows_in);
  const Shape shape = sample_shape(b);
  const std::size_t p = b.sample_size();
  const std::size_t k = m.rank();
  const std::size_t f = m.b.rows();
  const Matrix kr0 = kr_without(m, 0);
  std::vector<double> pred(rows.size());
  parallel_for(chunks_for(rows.size()), [&](std::size_t ch) {
    std::vector<double> g0(f * k);
    const std::size_t end = std::min(rows.size(), (ch + 1) * kChunk);
    for (std::size_t j = ch * kChunk; j < end; ++j) {
      const std::size_t n = rows[j];
      const std::uint32_t o = checked_output(b, n, m.outputs());
      std::fill(g0.begin(), g0.end(), 0.0);
      sample_mttkrp(b.x().data().data() + n * p, shape, 0, kr0, g0.data());
      double z = m.bias[o];
      for (std::size_t c = 0; c < k; ++c) {
        double t = 0.0;
        for (std::size_t i = 0; i < f; ++i) t += g0[i * k + c] * m.b(i, c);
        z += m.a(o, c) * t;
      }
      pred[j] = activate(m.activation, z);
    }
  });
  if (macs) *macs += static_cast<std::uint64_t>(rows.size()) * (p * k + f * k + k);
  return pred;
}

LossResult loss_weighted_ce(std::span<const double> pred, std::span<const double> y, double beta, bool literal_beta,
                            std::span<const double> weight) {
  if (pred.size() != y.size()) throw ShapeError("loss_weighted_ce: prediction and label counts differ");
  if (!weight.empty() && weight.size() != y.size()) throw ShapeError("loss_weighted_ce: weight count differs");
  if (!(beta > 0)) throw ShapeError("loss_weighted_ce: beta must be positive");
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.dpred.resize(pred.size());
  const double neg_scale = literal_beta ? beta : 1.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw ShapeError("loss_weighted_ce: labels must be 0 or 1");
    const double p = std::clamp(pred[i], kPredClamp, 1.0 - kPredClamp);
    const double w = weight.empty() ? 1.0 : weight[i];
    r.value += w * (-beta * y[i] * std::log(p) - neg_scale * (1.0 - y[i]) * std::log(1.0 - p));
    r.dpred[i] = w * (-beta * y[i] / p + neg_scale * (1.0 - y[i]) / (1.0 - p)) / n;
  }
  r.value /= n;
  return r;
}

LossResult loss_mse(std::span<const double> pred, std::span<const double> y, std::span<const double> weight) {
  if (pred.size() != y.size()) throw ShapeError("loss_mse: prediction and label counts differ");
  if (!weight.empty() && weight.size() != y.size()) throw ShapeError("loss_mse: weight count differs");
  const double n = static_cast<double>(pred.size());
  LossResult r;
  r.dpred.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double w = weight.empty() ? 1.0 : weight[i];
    const double e = pred[i] - y[i];
    r.value += w * e * e;
    r.dpred[i] = 2.0 * w * e / n;
  }
  r.value /= n;
  return r;
}

double class_ratio_beta(std::span<const double> labels) {
  std::size_t pos = 0, neg = 0;
  for (double v : labels) (v == 1.0 ? pos : neg)++;
  if (pos == 0 || neg == 0) return 1.0;
  return static_cast<double>(neg) / static_cast<double>(pos);
}

LossResult evaluate_loss(const LossSpec& spec, std::span<const double> pred, std::span<const double> y,
                         std::span<const double> weight) {
  return spec.kind == LossKind::weighted_ce ? loss_weighted_ce(pred, y, spec.beta, spec.literal_beta, weight)
                                            : loss_mse(pred, y, weight);
}

FullRankPass backward_full(const FullRankModel& m, const Batch& b, const LossSpec& loss, Rows rows_in,
                           std::uint64_t* macs) {
  const auto rows = resolve_rows(b, rows_in);
  const auto pred = forward_full(m, b, rows, macs);
  const auto ys = gather(b.y, rows);
  const auto ws = gather(b.weight, rows);
  const LossResult lr = evaluate_loss(loss, pred, ys, ws);

  const std::size_t p = b.sample_size();
  const std::size_t nch = chunks_for(rows.size());
  std::vector<std::vector<double>> partial(nch);
  std::vector<std::vector<double>> partial_bias(nch);
  parallel_for(nch, [&](std::size_t ch) {
    auto& gw = partial[ch];
    auto& gb = partial_bias[ch];
    gw.assign(m.w.size(), 0.0);
    gb.assign(m.outputs(), 0.0);
    const std::size_t end = std::min(rows.size(), (ch + 1) * kChunk);
    for (std::size_t j = ch * kChunk; j < end; ++j) {
      const std::size_t n = rows[j];
      const std::uint32_t o = b.output_of(n);
      const double dz = lr.dpred[j] * activation_slope(m.activation, pred[j]);
      const double* x = b.x().data().data() + n * p;
      double* g = gw.data() + o * p;
      for (std::size_t i = 0; i < p; ++i) g[i] += dz * x[i];
      gb[o] += dz;
    }
  });

  FullRankPass out;
  out.loss = lr.value;
  out.grad.w = DenseTensor(m.w.shape());
  out.grad.bias.assign(m.outputs(), 0.0);
  auto gw = out.grad.w.data();
  for (std::size_t ch = 0; ch < nch; ++ch) {
    for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += partial[ch][i];
    for (std::size_t o = 0; o < m.outputs(); ++o) out.grad.bias[o] += partial_bias[ch][o];
  }
  if (macs) *macs += static_cast<std::uint64_t>(rows.size()) * p;
  return out;
}

LowRankPass backward_low(const LowRankModel& m, const Batch& b, const LossSpec& loss, Rows rows_in,
                         std::uint64_t* macs) {
  check_low(m, b);
  const auto rows = resolve_rows(b, rows_in);
  const Shape shape = sample_shape(b);
  const std::size_t p = b.sample_size();
  const std::size_t k = m.rank();
  const std::size_t f = m.b.rows();
  const std::size_t nmodes = shape.size();  // feature mode + spatial modes
  std::vector<Matrix> kr(nmodes);
  for (std::size_t md = 0; md < nmodes; ++md) kr[md] = kr_without(m, md);

  // Forward, keeping the feature-mode contraction and per-component scores.
  std::vector<double> g0(rows.size() * f * k, 0.0);
  std::vector<double> t(rows.size() * k, 0.0);
  std::vector<double> pred(rows.size());
  const std::size_t nch = chunks_for(rows.size());
  parallel_for(nch, [&](std::size_t ch) {
    const std::size_t end = std::min(rows.size(), (ch + 1) * kChunk);
    for (std::size_t j = ch * kChunk; j < end; ++j) {
      const std::size_t n = rows[j];
      const std::uint32_t o = checked_output(b, n, m.outputs());
      double* gj = g0.data() + j * f * k;
      sample_mttkrp(b.x().data().data() + n * p, shape, 0, kr[0], gj);
      double z = m.bias[o];
      for (std::size_t c = 0; c < k; ++c) {
        double tc = 0.0;
        for (std::size_t i = 0; i < f; ++i) tc += gj[i * k + c] * m.b(i, c);
        t[j * k + c] = tc;
        z += m.a(o, c) * tc;
      }
      pred[j] = activate(m.activation, z);
    }
  });

  const auto ys = gather(b.y, rows);
  const auto ws = gather(b.weight, rows);
  const LossResult lr = evaluate_loss(loss, pred, ys, ws);

  struct Partial {
    Matrix a, b;
    std::vector<Matrix> c;
    std::vector<double> bias;
  };
  std::vector<Partial> partial(nch);
  parallel_for(nch, [&](std::size_t ch) {
    Partial& pa = partial[ch];
    pa.a = Matrix(m.a.rows(), k);
    pa.b = Matrix(f, k);
    for (const auto& cm : m.c) pa.c.emplace_back(cm.rows(), k);
    pa.bias.assign(m.outputs(), 0.0);
    std::vector<double> coef(k);
    std::vector<double> gs;
    const std::size_t end = std::min(rows.size(), (ch + 1) * kChunk);
    for (std::size_t j = ch * kChunk; j < end; ++j) {
      const std::size_t n = rows[j];
      const std::uint32_t o = b.output_of(n);
      const double dz = lr.dpred[j] * activation_slope(m.activation, pred[j]);
      pa.bias[o] += dz;
      for (std::size_t c = 0; c < k; ++c) {
        pa.a(o, c) += dz * t[j * k + c];
        coef[c] = dz * m.a(o, c);
      }
      const double* gj = g0.data() + j * f * k;
      for (std::size_t i = 0; i < f; ++i)
        for (std::size_t c = 0; c < k; ++c) pa.b(i, c) += coef[c] * gj[i * k + c];
      for (std::size_t s = 0; s < m.c.size(); ++s) {
        const std::size_t d = m.c[s].rows();
        gs.assign(d * k, 0.0);
        sample_mttkrp(b.x().data().data() + n * p, shape, s + 1, kr[s + 1], gs.data());
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t c = 0; c < k; ++c) pa.c[s](i, c) += coef[c] * gs[i * k + c];
      }
    }
  });

  LowRankPass out;
  out.loss = lr.value;
  out.grad.a = Matrix(m.a.rows(), k);
  out.grad.b = Matrix(f, k);
  for (const auto& cm : m.c) out.grad.c.emplace_back(cm.rows(), k);
  out.grad.bias.assign(m.outputs(), 0.0);
  auto add = [](Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
  };
  for (const auto& pa : partial) {
    add(out.grad.a, pa.a);
    add(out.grad.b, pa.b);
    for (std::size_t s = 0; s < m.c.size(); ++s) add(out.grad.c[s], pa.c[s]);
    for (std::size_t o = 0; o < m.outputs(); ++o) out.grad.bias[o] += pa.bias[o];
  }
  if (macs) {
    std::uint64_t per = p * k + f * k + k;  // forward
    per += k + f * k;                        // bias, A and B blocks
    for (const auto& cm : m.c) per += p * k + cm.rows() * k;
    *macs += static_cast<std::uint64_t>(rows.size()) * per;
  }
  return out;
}

}  // namespace mrtl
