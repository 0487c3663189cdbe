#pragma once

// Synthetic spatial tasks with planted CP factors, multiresolution
// downsampling, splits and a CSV loader.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mrtl/grid.hpp"
#include "mrtl/models.hpp"
#include "mrtl/tensor.hpp"

namespace mrtl {

enum class TaskKind { classification, regression };
enum class DownsampleKind { categorical, continuous };

TaskKind parse_task(const std::string& s);
std::string to_string(TaskKind t);

struct SyntheticSpec {
  TaskKind task = TaskKind::classification;
  std::size_t outputs = 6;
  std::size_t features = 4;
  ResolutionLadder ladder;
  std::size_t true_rank = 5;
  double smoothness = 0.15;       // bump width, in units of the extent diameter
  std::size_t bumps = 2;          // Gaussian bumps per spatial factor column
  double noise_sigma = 0.0;       // regression label noise
  double signal_scale = 6.0;      // multiplies W*
  double bias = -1.0;             // b* for every output
  std::size_t samples = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

struct Dataset {
  TaskKind task = TaskKind::classification;
  std::vector<std::shared_ptr<const DenseTensor>> x;  // per ladder level, (N, F, D1, ..., DS)
  std::vector<double> y;
  std::vector<std::uint32_t> output;   // output index per sample
  Split split;

  std::size_t samples() const { return y.size(); }
  Batch batch(std::size_t level) const;  // shares x[level]
};

struct GroundTruth {
  Matrix a, b;
  std::vector<std::vector<Matrix>> c;  // c[level][mode], D x K*
  double signal_scale = 1.0;
  std::vector<double> bias;

  // Planted factors at `level`; signal_scale is folded into the lambdas.
  CPFactors factors(std::size_t level) const;
  LowRankModel model(std::size_t level, Activation act) const;
};

struct Synthetic {
  Dataset data;
  GroundTruth truth;
};

Synthetic generate(const SyntheticSpec& spec);

// Aggregates fine cells of `mode` into the coarse cells containing them:
// sums (categorical) or means (continuous).
DenseTensor downsample(const DenseTensor& x_fine, std::size_t mode, const GridSpec& fine, const GridSpec& coarse,
                       DownsampleKind kind);
// Copies each coarse cell value to every fine cell inside it.
DenseTensor upsample_replicate(const DenseTensor& x_coarse, std::size_t mode, const GridSpec& coarse,
                               const GridSpec& fine);

// Seeded shuffle, then floor(0.6 n) / floor(0.2 n) / remainder.
Split split(std::size_t n, std::uint64_t seed);

// Sum of Gaussian bumps exp(-|l - mu|^2 / (2 w^2)) at the cell centers of g;
// centers in extent coordinates, width relative to the extent diameter.
std::vector<double> bump_field(const GridSpec& g, const std::vector<std::vector<double>>& centers,
                               const std::vector<double>& amplitudes, double width);

// CSV user data. First line: "# dims=AxB" (one spatial mode). Header row
// names the columns: id, optional output, cell_* values, feat_* values,
// label. Input tensor x[n, f, d] = feat_f * cell_d; with no feat_* columns
// F = 1 and x[n, 0, d] = cell_d. Single level; split seeded by `seed`.
struct CsvData {
  GridSpec grid;
  Dataset data;
};
CsvData load_csv_dataset(const std::filesystem::path& path, TaskKind task, std::uint64_t seed);

}  // namespace mrtl
