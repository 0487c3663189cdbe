#pragma once

// JSON run configuration. Every object is checked for unknown keys before
// any computation starts; missing keys take the defaults below.
//
// {
//   "task": "classification" | "regression",
//   "seed": 0,
//   "output_dir": "out",
//   "ladder": {"r0": 2, "modes": [{"extent": [[0,1],[0,1]], "levels": [[4,5],[8,10]]}]},
//   "model": {"outputs": 6, "features": 4, "rank": 5, "activation": "sigmoid"},
//   "optimizer": {"algorithm", "eta_full", "eta_low", "beta1", "beta2", "eps", "batch_size", "lr_decay_gamma"},
//   "regularization": {"full": {...}, "low": {...}}   each {"lambda", "l2_weight", "spatial_weight", "sigma", "sparsify_below"},
//   "criterion": {"kind", "patience", "c0", "tau"},
//   "training": {"min_epochs_per_level", "max_epochs_per_level", "scheme", "cp_max_iters", "cp_fit_tol",
//                "cp_fit_floor", "init", "random_init_scale", "beta", "literal_beta", "mac_budget"},
//   "data": {"synthetic": {"seed", "samples", "true_rank", "smoothness", "bumps", "noise_sigma", "signal_scale", "bias"}}
//         | {"csv": {"path", "kind": "categorical" | "continuous"}}
// }

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "mrtl/data.hpp"
#include "mrtl/trainer.hpp"

namespace mrtl {

struct RunConfig {
  TaskKind task = TaskKind::classification;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  ResolutionLadder ladder;
  std::size_t outputs = 6;
  std::size_t features = 4;
  TrainConfig train;

  bool synthetic = true;
  SyntheticSpec synth;             // ladder, outputs, features, task filled in
  std::uint64_t data_seed = 0;
  std::filesystem::path csv_path;  // relative paths resolve against the config file
  DownsampleKind csv_kind = DownsampleKind::categorical;

  nlohmann::ordered_json effective;  // normalized document, defaults filled in
};

// The built-in default document (the desk-scale classification task).
nlohmann::ordered_json default_config();

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Applies --seed / --out overrides and refreshes `effective`.
void override_seed(RunConfig& c, std::uint64_t seed);
void override_output(RunConfig& c, const std::filesystem::path& out);

// FNV-1a 64-bit of the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::ordered_json& doc);

// Synthetic data (all ladder levels) or CSV data downsampled along the ladder.
Dataset load_dataset(const RunConfig& c, GroundTruth* truth = nullptr);

}  // namespace mrtl
