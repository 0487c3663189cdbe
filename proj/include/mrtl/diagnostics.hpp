#pragma once

// Spatial autocorrelation, speedup accounting and convergence diagnostics.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/tensor.hpp"
#include "mrtl/trainer.hpp"

namespace mrtl {

struct Neighborhood {
  enum class Kind { rook, rbf } kind = Kind::rook;
  double sigma = 0.05;  // rbf bandwidth on normalized distances

  static Neighborhood rook() { return {}; }
  static Neighborhood rbf(double s) { return {Kind::rbf, s}; }
};

// I = (n / S0) * sum_ij w_ij z_i z_j / sum_i z_i^2 with z = x - mean(x) and
// S0 = sum_ij w_ij. Throws NumericError("zero variance") for constant fields.
double morans_i(std::span<const double> field, const GridSpec& g, Neighborhood nb = Neighborhood::rook());

// Flips every column so its largest-magnitude entry is positive.
Matrix sign_normalize_columns(const Matrix& m);

struct RunCost {
  bool crossed = false;
  std::size_t crossing_epoch = 0;  // global epoch, 1-based; 0 if never crossed
  std::uint64_t macs = 0;          // cumulative at crossing (or at the end)
  double wall_seconds = 0.0;
  double best_loss = 0.0;
  double final_loss = 0.0;
  std::uint64_t total_macs = 0;
  // (stage, level, macs spent there) in run order
  struct Share {
    std::string stage;
    std::size_t level;
    std::uint64_t macs;
  };
  std::vector<Share> breakdown;
};

struct SpeedupReport {
  double target_loss = 0.0;
  RunCost mrtl, fixed;
  std::optional<double> mac_ratio;   // fixed / mrtl at crossing
  std::optional<double> wall_ratio;

  std::string text() const;
};

RunCost run_cost(const TrainingTrace& t, double target_loss);
SpeedupReport speedup_report(const TrainingTrace& mrtl, const TrainingTrace& fixed, double target_loss);

// Convergence-rate factor log(1 / ((1 - gamma) eps)).
double speedup_factor(double gamma, double eps);

}  // namespace mrtl
