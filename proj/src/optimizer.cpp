#include "mrtl/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "mrtl/error.hpp"

namespace mrtl {

OptimAlgo parse_optim(const std::string& s) {
  if (s == "adam") return OptimAlgo::adam;
  if (s == "minisgd") return OptimAlgo::minisgd;
  throw SchemaError("unknown optimizer '" + s + "'");
}

std::string to_string(OptimAlgo a) { return a == OptimAlgo::adam ? "adam" : "minisgd"; }

void OptimConfig::validate() const {
  if (!(eta_full > 0) || !(eta_low > 0)) throw SchemaError("optimizer: learning rates must be positive");
  if (!(lr_decay_gamma > 0) || lr_decay_gamma > 1) throw SchemaError("optimizer: lr_decay_gamma must lie in (0, 1]");
  if (batch_size < 1) throw SchemaError("optimizer: batch_size must be at least 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw SchemaError("optimizer: Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw SchemaError("optimizer: eps must be positive");
}

void OptimState::reset(std::size_t n) {
  t = 0;
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

UpdateStats optimizer_update(std::span<double> params, std::span<const double> grad, OptimState& state,
                             const OptimConfig& cfg, double lr) {
  if (params.size() != grad.size()) throw ShapeError("optimizer_update: parameter and gradient sizes differ");
  if (!(lr > 0)) throw ShapeError("optimizer_update: learning rate must be positive");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NumericError("non-finite gradient at coordinate " + std::to_string(i));

  UpdateStats st;
  double sq = 0.0;
  if (cfg.algorithm == OptimAlgo::minisgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double d = lr * grad[i];
      params[i] -= d;
      sq += d * d;
      st.max_abs_step = std::max(st.max_abs_step, std::abs(d));
    }
  } else {
    if (state.m.size() != params.size()) state.reset(params.size());
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
      state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double mhat = state.m[i] / bc1;
      const double vhat = state.v[i] / bc2;
      const double d = lr * mhat / (std::sqrt(vhat) + cfg.eps);
      params[i] -= d;
      sq += d * d;
      st.max_abs_step = std::max(st.max_abs_step, std::abs(d));
    }
  }
  st.step_norm = std::sqrt(sq);
  for (double p : params)
    if (!std::isfinite(p)) throw NumericError("optimizer produced a non-finite parameter");
  return st;
}

}  // namespace mrtl
