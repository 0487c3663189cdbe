#pragma once

// Multiresolution training: full-rank levels 1..r0, CP handoff at r0, then
// low-rank levels r0..R with only the spatial factors refined.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mrtl/cp_decomp.hpp"
#include "mrtl/data.hpp"
#include "mrtl/grid.hpp"
#include "mrtl/interp.hpp"
#include "mrtl/kernel_reg.hpp"
#include "mrtl/models.hpp"
#include "mrtl/optimizer.hpp"

namespace mrtl {

enum class CriterionKind { val_loss, grad_norm, grad_var, grad_entropy, contraction_delta };

CriterionKind parse_criterion(const std::string& s);
std::string to_string(CriterionKind k);

struct FinegrainCriterion {
  CriterionKind kind = CriterionKind::val_loss;
  std::size_t patience = 4;
  double c0 = 1e-4;  // contraction_delta constant
  double tau = 0.0;

  void validate() const;
};

enum class Stage { full, low };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

struct EpochRecord {
  Stage stage = Stage::full;
  std::size_t level = 0;         // 0-based ladder index
  std::size_t epoch = 0;         // 1-based within the level
  std::size_t global_epoch = 0;  // 1-based over the run
  double lr = 0.0;
  double train_loss = 0.0;       // mean minibatch data loss
  double objective = 0.0;        // mean minibatch regularized objective
  double val_loss = 0.0;         // data loss on the full validation split
  double grad_norm2 = 0.0;       // mean squared gradient norm over minibatches
  double grad_var = 0.0;         // mean coordinate-wise variance of minibatch gradients
  double grad_entropy = 0.0;     // entropy of |mean gradient| normalized to sum 1
  double delta_norm = 0.0;       // |w_end - w_start| over the epoch
  std::uint64_t macs = 0;        // cumulative multiply-accumulates after this epoch
  double wall_seconds = 0.0;     // cumulative; not part of the deterministic exports
  std::string event;             // criterion that ended the level, if any

  double statistic(CriterionKind k) const;
};

struct TransitionRecord {
  Stage stage = Stage::full;  // stage being left
  std::size_t from_level = 0;
  std::size_t to_level = 0;
  std::string kind;     // "finegrain" or "decompose"
  std::string trigger;  // criterion name or "max_epochs"
  double val_loss_before = 0.0;
  double val_loss_after = 0.0;
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  std::vector<TransitionRecord> transitions;
  std::vector<std::string> warnings;
  double cp_fit = 0.0;

  std::vector<EpochRecord> level_records(Stage s, std::size_t level) const;
  double final_val_loss() const { return epochs.empty() ? 0.0 : epochs.back().val_loss; }
  std::uint64_t total_macs() const { return epochs.empty() ? 0 : epochs.back().macs; }
};

// CSV with one row per epoch (wall time excluded so the file is reproducible).
std::string trace_csv(const TrainingTrace& t);

struct EpochGradStats {
  double grad_norm2 = 0.0;
  double grad_var = 0.0;
  double grad_entropy = 0.0;
};

// Running per-coordinate sums of minibatch gradients.
class GradientAccumulator {
 public:
  void add(std::span<const double> g);
  std::size_t count() const { return count_; }
  EpochGradStats finish() const;

 private:
  std::size_t count_ = 0;
  std::vector<double> sum_, sum_sq_;
  double norm2_sum_ = 0.0;
};

EpochGradStats epoch_stats(const std::vector<std::vector<double>>& minibatch_grads);

// Decision from the records of the current level. level_cells is D_r, the
// total spatial cell count, used by contraction_delta.
bool should_finegrain(std::span<const EpochRecord> level, const FinegrainCriterion& c, std::size_t level_cells);

// Median ratio of successive delta norms over the last `window` ratios,
// clamped into (0, 1). Needs window + 1 values.
double contraction_estimate(std::span<const double> deltas, std::size_t window = 5);

enum class InitMode { mrtl, random };

struct TrainConfig {
  TaskKind task = TaskKind::classification;
  std::size_t outputs = 0;  // 0: one more than the largest output index in the data
  std::size_t rank = 5;
  double beta = 0.0;  // positive-class weight; 0 means neg/pos of the training labels
  bool literal_beta = false;
  OptimConfig optim;
  RegConfig reg_full;
  RegConfig reg_low;
  FinegrainCriterion criterion;
  std::size_t min_epochs_per_level = 2;
  std::size_t max_epochs_per_level = 30;
  InterpScheme scheme = InterpScheme::nearest;
  std::size_t cp_max_iters = 500;
  double cp_fit_tol = 1e-10;
  double cp_fit_floor = 0.5;
  InitMode init = InitMode::mrtl;
  double random_init_scale = 0.1;
  // Minimum cumulative MACs before the final level may stop (0 disables).
  std::uint64_t mac_budget = 0;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty disables checkpoints

  Activation activation() const;
  void validate() const;
};

struct RegContext {
  RegConfig cfg;
  std::vector<const SpatialKernel*> kernels;  // one per spatial mode
};

struct StepResult {
  double loss = 0.0;       // data loss on the minibatch
  double objective = 0.0;  // regularized
  std::vector<double> grad;
  UpdateStats update;
};

// Flat parameter order: full = W then bias; low = A, B, C_1..C_S, bias.
std::vector<double> flatten(const FullRankModel& m);
std::vector<double> flatten(const LowRankModel& m);
void unflatten(FullRankModel& m, std::span<const double> p);
void unflatten(LowRankModel& m, std::span<const double> p);

// Regularized objective and its flat gradient on `rows`.
std::pair<ObjectiveValue, std::vector<double>> objective_gradient(const FullRankModel& m, const Batch& b,
                                                                  const LossSpec& loss, Rows rows,
                                                                  const RegContext& reg, std::uint64_t* macs = nullptr);
std::pair<ObjectiveValue, std::vector<double>> objective_gradient(const LowRankModel& m, const Batch& b,
                                                                  const LossSpec& loss, Rows rows,
                                                                  const RegContext& reg, std::uint64_t* macs = nullptr);

// One minibatch update in place.
StepResult step(FullRankModel& m, const Batch& b, Rows rows, OptimState& st, const OptimConfig& cfg, double lr,
                const LossSpec& loss, const RegContext& reg, std::uint64_t* macs = nullptr);
StepResult step(LowRankModel& m, const Batch& b, Rows rows, OptimState& st, const OptimConfig& cfg, double lr,
                const LossSpec& loss, const RegContext& reg, std::uint64_t* macs = nullptr);

// Loss used for training and evaluation; beta from the training split unless set.
LossSpec make_loss(const Dataset& data, const TrainConfig& cfg);

struct RunResult {
  LowRankModel model;
  TrainingTrace trace;
};

// Full training; `data.x` holds one tensor per ladder level. With
// InitMode::random a randomly initialized low-rank model trains on the final
// level only.
RunResult run_mrtl(const ResolutionLadder& ladder, const Dataset& data, const TrainConfig& cfg);
// Same pipeline on the ladder's final level only.
RunResult run_fixed(const ResolutionLadder& ladder, const Dataset& data, const TrainConfig& cfg);
// Continues a run from a checkpoint directory written by run_mrtl.
RunResult resume_mrtl(const std::filesystem::path& checkpoint, const ResolutionLadder& ladder, const Dataset& data,
                      const TrainConfig& cfg);

ResolutionLadder final_level_ladder(const ResolutionLadder& ladder);
Dataset final_level_data(const Dataset& data);

}  // namespace mrtl
