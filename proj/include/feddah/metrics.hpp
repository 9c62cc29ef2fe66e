#pragma once

#include <string>
#include <vector>

#include "feddah/config.hpp"

namespace feddah {

// One row of metrics.csv.
struct MetricsRecord {
    std::string run_id;
    std::string mode;
    int round = 0;
    int client = 0;
    int task = 0;
    std::vector<double> dice;  // per evaluated task
    double mean_dice = 0.0;
    double server_loss = 0.0;  // NaN -> blank cell
    double w_s = 0.0;          // NaN -> blank cell
};

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

std::vector<MetricsRecord> to_records(const std::string& run_id, const std::string& mode,
                                      const std::vector<RoundLog>& logs);

// metrics.csv with one row per record and a fixed column order.
void write_metrics(const std::vector<MetricsRecord>& records, const std::string& dir,
                   int num_tasks);

// summary.json: config echo, final per-client dice tables, retention ratios.
void write_summary(const ExperimentConfig& cfg, const std::vector<MetricsRecord>& records,
                   const std::string& dir);

nlohmann::json build_summary(const ExperimentConfig& cfg,
                             const std::vector<MetricsRecord>& records);

// One SVG per client: per-task Dice trajectories against the round index.
void emit_plot(const std::vector<MetricsRecord>& records, const std::string& dir);

}  // namespace feddah
