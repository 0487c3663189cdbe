#pragma once

// First-order optimizers over flat parameter vectors.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mrtl {

enum class OptimAlgo { minisgd, adam };

OptimAlgo parse_optim(const std::string& s);
std::string to_string(OptimAlgo a);

struct OptimConfig {
  OptimAlgo algorithm = OptimAlgo::adam;
  double eta_full = 1e-2;  // learning rate, full-rank stage
  double eta_low = 1e-2;   // learning rate, low-rank stage
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 256;
  double lr_decay_gamma = 0.95;  // per epoch, within a stage
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimState {
  std::uint64_t t = 0;
  std::vector<double> m, v;

  void reset(std::size_t n);
};

struct UpdateStats {
  double step_norm = 0.0;
  double max_abs_step = 0.0;
};

// One update of `params` with gradient `grad` at learning rate `lr`:
//   minisgd: w <- w - lr g
//   adam:    m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//            w <- w - lr mhat / (sqrt(vhat) + eps)
// Throws NumericError on a non-finite gradient.
UpdateStats optimizer_update(std::span<double> params, std::span<const double> grad, OptimState& state,
                             const OptimConfig& cfg, double lr);

}  // namespace mrtl
