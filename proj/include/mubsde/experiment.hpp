#pragma once

#include <string>
#include <vector>

#include "mubsde/config.hpp"

namespace mubsde {

// One line of report.csv: a named statistic compared against a pinned
// threshold.
struct CheckRow {
  std::string check;
  std::string statistic;
  double value = 0.0;
  double threshold = 0.0;
  std::string comparator = "<=";
  bool pass = false;
};

// Outcome of one configured run. config_errors lists enabled checks the
// model cannot support (nothing is simulated or written in that case).
// fault_category is non-empty when a module fault stopped the run; the rows
// and files completed before the fault are kept.
struct ExperimentResult {
  std::vector<CheckRow> rows;
  bool all_pass = false;
  std::string fault_category;
  std::string fault_message;
  std::vector<std::string> config_errors;
  std::vector<std::string> written;  // file names created under the output dir
};

// Simulates the configured model, solves the backward equation when an
// enabled check needs it, runs the enabled checks and writes scenario dumps,
// the solution summary, report.csv and summary.txt into cfg.out_dir. Every
// artifact is a deterministic function of the config, so a repeated run
// reproduces the files byte for byte.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// The checks a model supports: distributional checks need an ensemble (the
// fixed scripted scenario only gets transfer and classify), a z or
// orthogonality check needs a diffusion coefficient and a value oracle, a u
// or martingale check needs jump mass and a value oracle.
std::vector<std::string> available_checks(const ExperimentConfig& cfg);

}  // namespace mubsde
