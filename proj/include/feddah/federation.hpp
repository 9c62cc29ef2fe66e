#pragma once

#include <map>
#include <string>
#include <vector>

#include "feddah/server.hpp"

namespace feddah {

enum class Mode { kFedDah, kFedAvg, kLocal, kAblateDahyper, kAblateLr, kAblateWs };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);  // ConfigError on unknown

struct TaskStream {
    std::vector<int> tasks;
};

struct FederationConfig {
    int num_clients = 4;
    int local_epochs = 5;    // E: client passes between communications
    int rounds_per_task = 20;  // R: communication rounds per task slot
    uint64_t seed = 0;
    std::vector<int> shared_initial = {1, 2};
    std::vector<int> shared_pool = {3, 4, 5, 6, 7};
    std::map<int, std::vector<int>> unique_pool = {
        {1, {8, 9}}, {2, {10, 11}}, {3, {12, 13}}, {4, {14, 15}}};
    Mode mode = Mode::kFedDah;
    int num_tasks = 15;  // output channels / evaluated tasks

    HyperConfig hyper;
    ServerConfig server;

    void validate() const;
};

// Per-client (image, full mask) shards; supervision channels are chosen per
// task at training time.
struct ClientData {
    std::vector<SegBatch> train;
    std::vector<SegBatch> test;
};

struct Dataset {
    std::vector<ClientData> clients;
    int height = 32;
    int width = 32;
    int num_classes = 15;
};

struct ClientState {
    int client_id = 0;
    TaskStream stream;
    int stream_position = 0;
    ParameterSet local_model;
    const ClientData* data = nullptr;

    int current_task() const;  // ContractError when the stream is exhausted
    bool exhausted() const { return stream_position >= static_cast<int>(stream.tasks.size()); }
};

struct RoundLog {
    int global_round = 0;  // 1-based
    int slot = 0;          // 0-based task slot
    int round_in_slot = 0;

    struct ClientEntry {
        int client_id = 0;
        int task_id = 0;          // 0 when the client's stream is exhausted
        double upload_loss = 0.0;  // mean loss of the last local epoch
        double server_loss = 0.0;  // NaN when inapplicable
        double w_s = 0.0;          // NaN when inapplicable
        std::vector<double> dice;  // one value per task 1..num_tasks
        double mean_dice = 0.0;
    };
    std::vector<ClientEntry> clients;
};

// shared_initial followed by a seeded shuffle of shared_pool + unique_pool.
std::vector<TaskStream> build_streams(const FederationConfig& config);

// Resets the client model to the served weights, trains E epochs on the
// current task, returns the upload. The shard order is fixed by order_seed.
Upload client_round(ClientState& client, const TargetArchitecture& arch,
                    const ParameterSet& init, int epochs, double lr, uint64_t order_seed,
                    double* last_epoch_loss = nullptr);

std::vector<RoundLog> run_federation(const FederationConfig& config, const Dataset& dataset,
                                     const TargetArchitecture& arch);
std::vector<RoundLog> run_fedavg_baseline(FederationConfig config, const Dataset& dataset,
                                          const TargetArchitecture& arch);
std::vector<RoundLog> run_local_baseline(FederationConfig config, const Dataset& dataset,
                                         const TargetArchitecture& arch);

// Mean Dice of the model on one channel over a test shard (binarized at 0.5).
double mean_dice_channel(const TargetArchitecture& arch, const ParameterSet& params,
                         const std::vector<SegBatch>& test, int channel);

// Uniform element-wise mean of uploads.
ParameterSet fedavg_aggregate(const std::vector<Upload>& uploads);

}  // namespace feddah
