#include "mrtl/cp_decomp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "mrtl/error.hpp"

namespace mrtl {
namespace {

double column_norm(const Matrix& m, std::size_t c) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, c) * m(i, c);
  return std::sqrt(s);
}

double residual_fit(const DenseTensor& w, double wnorm, const CPFactors& f) {
  const DenseTensor r = cp_reconstruct(f);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = w[i] - r[i];
    s += d * d;
  }
  return 1.0 - std::sqrt(s) / wnorm;
}

}  // namespace

void AlsConfig::validate() const {
  if (rank < 1) throw SchemaError("AlsConfig: rank must be at least 1");
  if (!(fit_tol > 0)) throw SchemaError("AlsConfig: fit_tol must be positive");
  if (max_iters < 1) throw SchemaError("AlsConfig: max_iters must be at least 1");
}

CPFactors normalize(const CPFactors& f) {
  const std::size_t k = f.rank();
  CPFactors out = f;
  out.lambdas.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double lam = f.lambda(c);
    for (auto& m : out.factors) {
      const double n = column_norm(m, c);
      lam *= n;
      for (std::size_t i = 0; i < m.rows(); ++i) m(i, c) = n > 0 ? m(i, c) / n : 0.0;
    }
    out.lambdas[c] = lam;
  }
  return out;
}

AlsResult cp_als(const DenseTensor& w, const AlsConfig& cfg) {
  cfg.validate();
  const std::size_t n = w.order();
  const std::size_t k = cfg.rank;
  if (n < 2) throw ShapeError("cp_als: tensor needs at least two modes");
  if (!w.all_finite()) throw NumericError("cp_als: input tensor has non-finite entries");
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t others = w.size() / w.dim(m);
    if (k > others) {
      throw ShapeError("cp_als: rank " + std::to_string(k) + " exceeds " + std::to_string(others) +
                       ", the column count of the mode-" + std::to_string(m) + " unfolding");
    }
  }

  AlsResult res;
  res.factors.lambdas.assign(k, 0.0);
  const double wnorm = frobenius_norm(w.data());
  if (wnorm == 0.0) {
    for (std::size_t m = 0; m < n; ++m) res.factors.factors.emplace_back(w.dim(m), k);
    res.fit = 1.0;
    return res;
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& fs = res.factors.factors;
  for (std::size_t m = 0; m < n; ++m) {
    Matrix f(w.dim(m), k);
    for (double& v : f.data()) v = normal(rng);
    for (std::size_t c = 0; c < k; ++c) {
      const double s = column_norm(f, c);
      for (std::size_t i = 0; i < f.rows(); ++i) f(i, c) /= s;
    }
    fs.push_back(std::move(f));
  }
  res.factors.lambdas.assign(k, 1.0);

  double prev = -1.0;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    for (std::size_t m = 0; m < n; ++m) {
      // V = Hadamard product of the other factors' Gram matrices.
      Eigen::MatrixXd v = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
      for (std::size_t o = 0; o < n; ++o) {
        if (o == m) continue;
        const Matrix g = gram(fs[o]);
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) v(a, b) *= g(a, b);
      }
      v.diagonal().array() += kAlsRidge;
      const Matrix rhs = mttkrp(w, fs, m);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> r(
          rhs.data().data(), static_cast<Eigen::Index>(rhs.rows()), static_cast<Eigen::Index>(k));
      // Solve X V = R, i.e. V X^T = R^T (V symmetric).
      const Eigen::MatrixXd sol = v.ldlt().solve(r.transpose()).transpose();
      Matrix upd(w.dim(m), k);
      for (std::size_t i = 0; i < upd.rows(); ++i)
        for (std::size_t c = 0; c < k; ++c) upd(i, c) = sol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      for (std::size_t c = 0; c < k; ++c) {
        const double s = column_norm(upd, c);
        res.factors.lambdas[c] = s;
        for (std::size_t i = 0; i < upd.rows(); ++i) upd(i, c) = s > 0 ? upd(i, c) / s : 0.0;
      }
      fs[m] = std::move(upd);
    }
    const double fit = residual_fit(w, wnorm, res.factors);
    if (!std::isfinite(fit)) throw NumericError("cp_als: fit became non-finite at sweep " + std::to_string(it + 1));
    res.fit_history.push_back(fit);
    res.fit = fit;
    res.iterations = it + 1;
    if (std::abs(fit - prev) < cfg.fit_tol) break;
    prev = fit;
  }
  return res;
}

Alignment align_factors(const CPFactors& est, const CPFactors& truth) {
  const std::size_t k = truth.rank();
  if (est.rank() != k) throw ShapeError("align_factors: ranks differ");
  if (est.factors.size() != truth.factors.size()) throw ShapeError("align_factors: mode counts differ");
  const std::size_t modes = truth.factors.size();
  for (std::size_t m = 0; m < modes; ++m)
    if (est.factors[m].rows() != truth.factors[m].rows())
      throw ShapeError("align_factors: size mismatch on mode " + std::to_string(m));

  // cos[m][e * k + t]
  std::vector<std::vector<double>> cos(modes, std::vector<double>(k * k, 0.0));
  for (std::size_t m = 0; m < modes; ++m) {
    const Matrix& a = est.factors[m];
    const Matrix& b = truth.factors[m];
    for (std::size_t e = 0; e < k; ++e)
      for (std::size_t t = 0; t < k; ++t) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, e) * b(i, t);
        const double na = column_norm(a, e), nb = column_norm(b, t);
        cos[m][e * k + t] = (na > 0 && nb > 0) ? s / (na * nb) : 0.0;
      }
  }
  std::vector<double> sim(k * k, 0.0);
  for (std::size_t i = 0; i < k * k; ++i) {
    for (std::size_t m = 0; m < modes; ++m) sim[i] += std::abs(cos[m][i]);
    sim[i] /= static_cast<double>(modes);
  }

  Alignment out;
  out.permutation.assign(k, 0);
  out.similarity.assign(k, 0.0);
  out.signs.assign(modes, std::vector<int>(k, 1));
  std::vector<bool> used_e(k, false), used_t(k, false);
  for (std::size_t step = 0; step < k; ++step) {
    double best = -1.0;
    std::size_t be = 0, bt = 0;
    for (std::size_t e = 0; e < k; ++e) {
      if (used_e[e]) continue;
      for (std::size_t t = 0; t < k; ++t) {
        if (used_t[t]) continue;
        if (sim[e * k + t] > best) {
          best = sim[e * k + t];
          be = e;
          bt = t;
        }
      }
    }
    used_e[be] = used_t[bt] = true;
    out.permutation[bt] = be;
    out.similarity[bt] = best;
    for (std::size_t m = 0; m < modes; ++m) out.signs[m][bt] = cos[m][be * k + bt] < 0 ? -1 : 1;
  }
  double s = 0.0;
  for (double v : out.similarity) s += v;
  out.score = s / static_cast<double>(k);
  return out;
}

}  // namespace mrtl
