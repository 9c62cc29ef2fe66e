#include "feddah/federation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace feddah {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
}

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::kFedDah: return "feddah";
        case Mode::kFedAvg: return "fedavg";
        case Mode::kLocal: return "local";
        case Mode::kAblateDahyper: return "ablate_dahyper";
        case Mode::kAblateLr: return "ablate_lr";
        case Mode::kAblateWs: return "ablate_ws";
    }
    return "feddah";
}

Mode mode_from_name(const std::string& name) {
    if (name == "feddah") return Mode::kFedDah;
    if (name == "fedavg") return Mode::kFedAvg;
    if (name == "local") return Mode::kLocal;
    if (name == "ablate_dahyper") return Mode::kAblateDahyper;
    if (name == "ablate_lr") return Mode::kAblateLr;
    if (name == "ablate_ws") return Mode::kAblateWs;
    throw ConfigError("unknown mode: " + name);
}

void FederationConfig::validate() const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
    if (rounds_per_task < 1) throw ConfigError("rounds_per_task must be >= 1");
    if (num_tasks < 1) throw ConfigError("num_tasks must be >= 1");
    std::set<int> seen(shared_initial.begin(), shared_initial.end());
    if (seen.size() != shared_initial.size()) {
        throw ConfigError("shared_initial contains duplicates");
    }
    for (int t : shared_pool) {
        if (!seen.insert(t).second) {
            throw ConfigError("shared_pool overlaps shared_initial or itself");
        }
    }
    for (const auto& [client, pool] : unique_pool) {
        if (client < 1 || client > num_clients) {
            throw ConfigError("unique_pool client id out of range");
        }
        for (int t : pool) {
            if (!seen.insert(t).second) {
                throw ConfigError("unique_pool overlaps another pool");
            }
        }
    }
    for (int t : seen) {
        if (t < 1 || t > num_tasks) {
            throw ConfigError("task id " + std::to_string(t) + " outside 1..num_tasks");
        }
    }
    server.validate();
}

int ClientState::current_task() const {
    if (exhausted()) throw ContractError("client stream exhausted");
    return stream.tasks[stream_position];
}

std::vector<TaskStream> build_streams(const FederationConfig& config) {
    config.validate();
    std::vector<TaskStream> streams;
    streams.reserve(config.num_clients);
    for (int c = 1; c <= config.num_clients; ++c) {
        std::vector<int> rest = config.shared_pool;
        auto it = config.unique_pool.find(c);
        if (it != config.unique_pool.end()) {
            rest.insert(rest.end(), it->second.begin(), it->second.end());
        }
        Rng rng(derive_seed(config.seed, {kSeedStream, static_cast<uint64_t>(c)}));
        rng.shuffle(rest);
        TaskStream s;
        s.tasks = config.shared_initial;
        s.tasks.insert(s.tasks.end(), rest.begin(), rest.end());
        streams.push_back(std::move(s));
    }
    return streams;
}

Upload client_round(ClientState& client, const TargetArchitecture& arch,
                    const ParameterSet& init, int epochs, double lr, uint64_t order_seed,
                    double* last_epoch_loss) {
    if (client.data == nullptr || client.data->train.empty()) {
        throw ContractError("client_round: no training shard");
    }
    int task = client.current_task();
    client.local_model = init;

    std::vector<size_t> order(client.data->train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(order_seed);
    rng.shuffle(order);
    std::vector<SegBatch> shard;
    shard.reserve(order.size());
    for (size_t i : order) {
        SegBatch b = client.data->train[i];
        b.supervised_channel = task - 1;
        shard.push_back(std::move(b));
    }

    AdamState adam;
    adam.hyper.lr = lr;
    TrainReport report = train_local(arch, client.local_model, shard,
                                     epochs, adam);
    if (last_epoch_loss) *last_epoch_loss = report.epoch_mean_loss.back();

    Upload up;
    up.client_id = client.client_id;
    up.task_id = task;
    up.weights = client.local_model;
    return up;
}

double mean_dice_channel(const TargetArchitecture& arch, const ParameterSet& params,
                         const std::vector<SegBatch>& test, int channel) {
    if (test.empty()) throw ContractError("mean_dice_channel: empty test shard");
    const LayerSpec& last = arch.layers.back();
    if (channel < 0 || channel >= last.n_out) {
        throw ContractError("mean_dice_channel: channel out of range");
    }
    // Slice the final layer down to the one evaluated channel.
    TargetArchitecture sliced = arch;
    sliced.layers.back().n_out = 1;
    ParameterSet sp = params;
    const Array& k = params.layers.back().kernel;
    size_t plane = static_cast<size_t>(last.n_in) * last.f_s * last.f_s;
    Array k1({1, last.n_in, last.f_s, last.f_s});
    std::copy(k.data.begin() + channel * plane, k.data.begin() + (channel + 1) * plane,
              k1.data.begin());
    sp.layers.back().kernel = std::move(k1);
    sp.layers.back().bias = Array({1}, {params.layers.back().bias.data[channel]});

    double acc = 0.0;
    size_t count = 0;
    for (const SegBatch& batch : test) {
        Array probs = forward(sliced, sp, batch.images);
        int b = batch.images.shape[0];
        int h = batch.images.shape[2], w = batch.images.shape[3];
        size_t hw = static_cast<size_t>(h) * w;
        size_t mask_plane = static_cast<size_t>(batch.masks.shape[1]) * hw;
        for (int i = 0; i < b; ++i) {
            Array pred({h, w});
            std::copy(probs.data.begin() + i * hw, probs.data.begin() + (i + 1) * hw,
                      pred.data.begin());
            Array mask({h, w});
            size_t moff = i * mask_plane + static_cast<size_t>(channel) * hw;
            std::copy(batch.masks.data.begin() + moff, batch.masks.data.begin() + moff + hw,
                      mask.data.begin());
            acc += dice_score(binarize(pred), mask);
            count += 1;
        }
    }
    return acc / static_cast<double>(count);
}

ParameterSet fedavg_aggregate(const std::vector<Upload>& uploads) {
    if (uploads.empty()) throw ContractError("fedavg_aggregate: no uploads");
    std::vector<const ParameterSet*> sets;
    sets.reserve(uploads.size());
    for (const Upload& u : uploads) sets.push_back(&u.weights);
    return average(sets);
}

namespace {

// Per-task cumulative mean of every upload seen for that task.
struct TaskStore {
    std::map<int, std::pair<ParameterSet, int>> entries;  // task -> (mean, count)

    bool has(int task) const { return entries.count(task) > 0; }
    const ParameterSet& get(int task) const { return entries.at(task).first; }

    void absorb(const Upload& upload) {
        auto it = entries.find(upload.task_id);
        if (it == entries.end()) {
            entries.emplace(upload.task_id, std::make_pair(upload.weights, 1));
            return;
        }
        ParameterSet& mean = it->second.first;
        int n = ++it->second.second;
        double w_new = 1.0 / static_cast<double>(n);
        for (size_t j = 0; j < mean.layers.size(); ++j) {
            for (size_t i = 0; i < mean.layers[j].kernel.size(); ++i) {
                mean.layers[j].kernel.data[i] +=
                    w_new * (upload.weights.layers[j].kernel.data[i] -
                             mean.layers[j].kernel.data[i]);
            }
            for (size_t i = 0; i < mean.layers[j].bias.size(); ++i) {
                mean.layers[j].bias.data[i] +=
                    w_new * (upload.weights.layers[j].bias.data[i] -
                             mean.layers[j].bias.data[i]);
            }
        }
    }
};

bool uses_hypernetwork(Mode mode) {
    return mode == Mode::kFedDah || mode == Mode::kAblateLr || mode == Mode::kAblateWs;
}

}  // namespace

std::vector<RoundLog> run_federation(const FederationConfig& config, const Dataset& dataset,
                                     const TargetArchitecture& arch) {
    config.validate();
    arch.validate_for_forward();
    if (static_cast<int>(dataset.clients.size()) < config.num_clients) {
        throw ContractError("run_federation: dataset does not cover all clients");
    }
    if (arch.layers.back().n_out != config.num_tasks) {
        throw ContractError("run_federation: architecture channels do not match num_tasks");
    }

    ServerConfig scfg = config.server;
    if (config.mode == Mode::kAblateLr) {
        scfg.beta = 0.0;
        scfg.beta1 = 0.0;
        scfg.beta2 = 0.0;
    }
    if (config.mode == Mode::kAblateWs) scfg.force_ws_one = true;

    std::vector<TaskStream> streams = build_streams(config);
    size_t max_slots = 0;
    for (const TaskStream& s : streams) max_slots = std::max(max_slots, s.tasks.size());

    std::vector<ClientState> clients;
    for (int c = 1; c <= config.num_clients; ++c) {
        ClientState st;
        st.client_id = c;
        st.stream = streams[c - 1];
        st.data = &dataset.clients[c - 1];
        st.local_model = init_params(arch, derive_seed(config.seed,
                                                       {kSeedClientInit,
                                                        static_cast<uint64_t>(c)}));
        clients.push_back(std::move(st));
    }

    // Server-side state (per mode).
    TaskRegistry registry(config.hyper.n_z);
    HyperParams hyper;
    HyperParams snap;
    std::map<int, Array> snap_cache;
    AdamState server_adam;
    server_adam.hyper.lr = scfg.lr;
    BasicModelRegistry basics;
    if (uses_hypernetwork(config.mode)) {
        hyper = init_hyper(arch, config.hyper, config.seed);
        snap = snapshot(hyper);
    }
    ParameterSet global_model =
        init_params(arch, derive_seed(config.seed, {kSeedClientInit, 0}));
    TaskStore store;
    ParameterSet zero_model = zero_params(arch);

    std::vector<RoundLog> logs;
    int global_round = 0;
    for (size_t slot = 0; slot < max_slots; ++slot) {
        for (ClientState& c : clients) c.stream_position = static_cast<int>(slot);
        if (uses_hypernetwork(config.mode)) {
            // Register the slot's unseen tasks, then freeze the reference
            // parameters for this slot's history regularizer.
            std::vector<int> fresh;
            for (const ClientState& c : clients) {
                if (c.exhausted()) continue;
                int t = c.current_task();
                if (!registry.has(t)) fresh.push_back(t);
            }
            std::sort(fresh.begin(), fresh.end());
            fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
            for (int t : fresh) registry.register_task(t, config.seed);
            snap = snapshot(hyper);
            snap_cache.clear();
            for (int t : registry.task_ids()) {
                snap_cache.emplace(t, generate_flat(snap, registry.get(t).z, arch));
            }
        }

        for (int r = 0; r < config.rounds_per_task; ++r) {
            global_round += 1;
            RoundLog log;
            log.global_round = global_round;
            log.slot = static_cast<int>(slot);
            log.round_in_slot = r;

            // Client phase.
            std::vector<Upload> uploads;
            std::map<int, double> upload_losses;  // by client id
            for (ClientState& c : clients) {
                if (c.exhausted()) continue;
                int task = c.current_task();
                ParameterSet served;
                switch (config.mode) {
                    case Mode::kFedDah:
                    case Mode::kAblateLr:
                    case Mode::kAblateWs:
                        served = generate_model(hyper, registry.get(task), arch);
                        break;
                    case Mode::kFedAvg:
                        served = global_model;
                        break;
                    case Mode::kLocal:
                        served = c.local_model;
                        break;
                    case Mode::kAblateDahyper:
                        served = store.has(task) ? store.get(task) : c.local_model;
                        break;
                }
                double loss = 0.0;
                uint64_t order_seed = derive_seed(
                    config.seed, {kSeedShardOrder, static_cast<uint64_t>(c.client_id),
                                  static_cast<uint64_t>(slot), static_cast<uint64_t>(r)});
                Upload up = client_round(c, arch, served, config.local_epochs, scfg.lr,
                                         order_seed, &loss);
                up.round_index = global_round;
                upload_losses[c.client_id] = loss;
                uploads.push_back(std::move(up));
            }

            // Server phase.
            std::map<int, UploadReport> reports;  // by client id
            if (!uploads.empty()) {
                switch (config.mode) {
                    case Mode::kFedDah:
                    case Mode::kAblateLr:
                    case Mode::kAblateWs: {
                        RoundReport rep = server_round(hyper, basics, uploads, snap, registry,
                                                       server_adam, arch, scfg, global_round,
                                                       &snap_cache);
                        for (UploadReport& ur : rep.uploads) reports[ur.client_id] = ur;
                        break;
                    }
                    case Mode::kFedAvg:
                        global_model = fedavg_aggregate(uploads);
                        break;
                    case Mode::kLocal:
                        break;  // the client keeps its trained weights
                    case Mode::kAblateDahyper:
                        for (const Upload& u : uploads) store.absorb(u);
                        break;
                }
            }

            // Evaluation phase: per-task models on every client's test set.
            std::vector<const ParameterSet*> task_models(config.num_tasks, nullptr);
            std::vector<ParameterSet> generated;
            generated.reserve(config.num_tasks);
            for (int t = 1; t <= config.num_tasks; ++t) {
                switch (config.mode) {
                    case Mode::kFedDah:
                    case Mode::kAblateLr:
                    case Mode::kAblateWs:
                        if (registry.has(t)) {
                            generated.push_back(generate_model(hyper, registry.get(t), arch));
                            task_models[t - 1] = &generated.back();
                        } else {
                            task_models[t - 1] = &zero_model;
                        }
                        break;
                    case Mode::kFedAvg:
                        task_models[t - 1] = &global_model;
                        break;
                    case Mode::kLocal:
                        task_models[t - 1] = nullptr;  // per-client below
                        break;
                    case Mode::kAblateDahyper:
                        task_models[t - 1] = store.has(t) ? &store.get(t) : &zero_model;
                        break;
                }
            }

            for (ClientState& c : clients) {
                RoundLog::ClientEntry entry;
                entry.client_id = c.client_id;
                entry.task_id = c.exhausted() ? 0 : c.current_task();
                entry.upload_loss =
                    upload_losses.count(c.client_id) ? upload_losses.at(c.client_id) : kNan;
                entry.server_loss = kNan;
                entry.w_s = kNan;
                auto it = reports.find(c.client_id);
                if (it != reports.end()) {
                    entry.server_loss = it->second.final_loss;
                    if (it->second.w_s) entry.w_s = *it->second.w_s;
                }
                entry.dice.resize(config.num_tasks, 0.0);
                double acc = 0.0;
                for (int t = 1; t <= config.num_tasks; ++t) {
                    const ParameterSet* model =
                        config.mode == Mode::kLocal ? &c.local_model : task_models[t - 1];
                    entry.dice[t - 1] = mean_dice_channel(arch, *model, c.data->test, t - 1);
                    acc += entry.dice[t - 1];
                }
                entry.mean_dice = acc / static_cast<double>(config.num_tasks);
                log.clients.push_back(std::move(entry));
            }
            logs.push_back(std::move(log));
        }
    }
    return logs;
}

std::vector<RoundLog> run_fedavg_baseline(FederationConfig config, const Dataset& dataset,
                                          const TargetArchitecture& arch) {
    config.mode = Mode::kFedAvg;
    return run_federation(config, dataset, arch);
}

std::vector<RoundLog> run_local_baseline(FederationConfig config, const Dataset& dataset,
                                         const TargetArchitecture& arch) {
    config.mode = Mode::kLocal;
    return run_federation(config, dataset, arch);
}

}  // namespace feddah
