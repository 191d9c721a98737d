#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

#include "config.hpp"

namespace crtopt::cli {

// Runs the configured optimiser and writes into `out_dir`:
//   design.csv     one row per cluster, one column per period, cells "treated:count"
//   weights.csv    unit weights (weight algorithms only)
//   summary.json   algorithm, criterion, wall time, seed, config digest
// Sweeps write one design per grid cell under designs/ plus sweep.csv.
// Returns the summary. Library exceptions propagate.
nlohmann::json run_optimize(const RunConfig& config, const std::function<void(int, double)>& progress = {});

// Criterion, information-matrix diagnostics and, when the closed form applies, its
// cross-check for one design.
nlohmann::json evaluate_design(const RunConfig& config, const Design& design);

// Human-readable rendering of evaluate_design's report.
void print_evaluation(std::ostream& out, const nlohmann::json& report);

// Design grid rows for a design: one row per cluster, "treated:count" per period.
void write_design_csv(std::ostream& out, const DesignSpace& space, const Design& design);

}  // namespace crtopt::cli
