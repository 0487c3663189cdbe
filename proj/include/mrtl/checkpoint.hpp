#pragma once

// Run checkpoints: a directory holding header.json (stage, level, counters,
// trace) and one "MRTN" file per parameter block and optimizer moment.

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "mrtl/trainer.hpp"

namespace mrtl {

struct RunState {
  Stage stage = Stage::full;
  std::size_t level = 0;
  std::size_t stage_epochs = 0;  // epochs completed in the current stage
  FullRankModel full;
  LowRankModel low;
  TrainingTrace trace;
  std::uint64_t macs = 0;
  bool finished = false;
  Level grids;  // spatial grids of `level`, when known
  OptimState optim;
};

void write_checkpoint(const std::filesystem::path& dir, const RunState& s);
RunState read_checkpoint(const std::filesystem::path& dir);

// Deterministic JSON forms (wall time excluded).
nlohmann::ordered_json trace_to_json(const TrainingTrace& t);
TrainingTrace trace_from_json(const nlohmann::json& j);

}  // namespace mrtl
