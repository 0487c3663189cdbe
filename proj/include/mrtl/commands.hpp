#pragma once

// Command-line entry points. Exit codes: 0 success, 1 schema/shape/usage
// errors, 2 I/O errors, 3 numeric failures.

#include <span>
#include <string>

#include "mrtl/grid.hpp"

namespace mrtl {

constexpr int kExitOk = 0;
constexpr int kExitSchema = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

int run_cli(int argc, char** argv);

// Plain PGM (P2), 255 levels; value v maps to round(255 (v + m) / 2m) with
// m = max|column| (all 128 when m = 0). One row for 1-axis grids, otherwise
// dims[0] rows over the remaining cells.
std::string heatmap_pgm(std::span<const double> column, const GridSpec& g);

// F1 of the positive class at threshold 0.5; 1 when there are no positives
// in either predictions or labels.
double f1_score(std::span<const double> pred, std::span<const double> y);

}  // namespace mrtl
