#pragma once

#include <iosfwd>

#include "epifc/config.hpp"
#include "epifc/error.hpp"

namespace epifc {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRuntime = 3 };

int exit_code_for(ErrorCode code);

// Output layout under `config.out`:
//   panel/                       cleaned panel export (written by ingest)
//   ingest_report.txt            dropped countries/features and warnings
//   heatmap.csv                  correlation matrix with labels
//   results/<model>_<method>_K<k>.json   one document per sweep cell
//   curves/<model>_<method>.csv  K vs train/test mean and sd
//   best_methods.csv             best method per (model, K)
//   feature_counts.csv           selected-feature count per cell
//   selection_search.csv         PCorr/RFS search curves
//   trace_K<k>.csv               sliding-window trace for one country
//   summary.json, summary.txt    consolidated report

void cmd_ingest(const RunConfig& config, std::ostream& log);
void cmd_heatmap(const RunConfig& config, std::ostream& log);
void cmd_sweep(const RunConfig& config, std::ostream& log);
void cmd_trace(const RunConfig& config, std::ostream& log);
void cmd_report(const RunConfig& config, std::ostream& log);

/// Keeps freed heap memory in the process instead of returning it to the
/// kernel after every large temporary (glibc only; a no-op elsewhere).
/// Training allocates and frees many short-lived matrices, and without this
/// a quarter of the sweep time went to page mapping.
void tune_allocator();

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace epifc
