#pragma once

#include <iosfwd>

#include "feddah/metrics.hpp"

namespace feddah {

struct RunResult {
    std::vector<RoundLog> logs;
    std::vector<MetricsRecord> records;
};

// Dataset generation plus the federation run for cfg's mode; no file output.
RunResult run_experiment(const ExperimentConfig& cfg);

// run_experiment plus metrics.csv, summary.json and the per-client SVGs
// under cfg.out_dir.
RunResult run_and_write(const ExperimentConfig& cfg);

// Writes the generated dataset as .npy arrays plus an index.json.
void write_dataset_npy(const ExperimentConfig& cfg, const std::string& out_dir);

// Fast oracle self-tests (gradients, Adam, JS, Dice). Returns the number of
// failures and prints one line per check.
int run_self_checks(std::ostream& out);

}  // namespace feddah
