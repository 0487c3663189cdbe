#pragma once

// CP decomposition by alternating least squares and factor alignment.

#include <cstdint>
#include <vector>

#include "mrtl/tensor.hpp"

namespace mrtl {

struct AlsConfig {
  std::size_t rank = 5;
  std::size_t max_iters = 500;
  double fit_tol = 1e-10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AlsResult {
  CPFactors factors;  // unit-norm columns, magnitudes in lambdas
  double fit = 0.0;   // 1 - ||W - W_hat|| / ||W||
  std::size_t iterations = 0;
  std::vector<double> fit_history;  // fit after each sweep
};

constexpr double kAlsRidge = 1e-10;

AlsResult cp_als(const DenseTensor& w, const AlsConfig& cfg);

// Rescales every column to unit norm and folds the norms into lambdas.
// Zero columns stay zero with lambda 0.
CPFactors normalize(const CPFactors& f);

struct Alignment {
  std::vector<std::size_t> permutation;   // permutation[j] = estimated component matched to truth j
  std::vector<std::vector<int>> signs;    // signs[mode][j], +1 or -1
  std::vector<double> similarity;         // per truth component
  double score = 0.0;                     // mean of `similarity`
};

// Greedy matching by absolute cosine similarity, averaged over modes.
Alignment align_factors(const CPFactors& est, const CPFactors& truth);

}  // namespace mrtl
