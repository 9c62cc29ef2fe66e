#include "feddah/config.hpp"

#include <fstream>
#include <set>

namespace feddah {

std::string ExperimentConfig::run_id() const {
    return mode_name(fed.mode) + "-s" + std::to_string(fed.seed);
}

void ExperimentConfig::validate() const {
    fed.validate();
    if (data.images_per_client < 10) {
        throw ConfigError("images_per_client must be >= 10");
    }
    if (data.num_clients != fed.num_clients) {
        throw ConfigError("num_clients mismatch between federation and dataset");
    }
    if (data.num_classes != fed.num_tasks) {
        throw ConfigError("num_tasks must equal the dataset class count");
    }
}

namespace {

template <typename T>
void read_key(const nlohmann::json& doc, const char* key, T& out) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    try {
        out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    static const std::set<std::string> known = {
        "mode", "seed", "num_clients", "local_epochs", "rounds_per_task",
        "shared_initial", "shared_pool", "unique_pool", "num_tasks",
        "images_per_client", "image_size", "beta", "beta1", "beta2",
        "server_steps_per_round", "js_bins", "js_epsilon", "lr",
        "n_z", "hidden", "init_scale", "out_dir"};
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError("unknown config key '" + it.key() + "'");
        }
    }

    ExperimentConfig cfg;
    std::string mode = mode_name(cfg.fed.mode);
    read_key(doc, "mode", mode);
    cfg.fed.mode = mode_from_name(mode);
    read_key(doc, "seed", cfg.fed.seed);
    read_key(doc, "num_clients", cfg.fed.num_clients);
    read_key(doc, "local_epochs", cfg.fed.local_epochs);
    read_key(doc, "rounds_per_task", cfg.fed.rounds_per_task);
    read_key(doc, "shared_initial", cfg.fed.shared_initial);
    read_key(doc, "shared_pool", cfg.fed.shared_pool);
    if (doc.count("unique_pool")) {
        const nlohmann::json& up = doc.at("unique_pool");
        if (!up.is_object()) throw ConfigError("config key 'unique_pool' must be an object");
        cfg.fed.unique_pool.clear();
        for (auto it = up.begin(); it != up.end(); ++it) {
            int client = 0;
            try {
                client = std::stoi(it.key());
            } catch (...) {
                throw ConfigError("unique_pool keys must be client ids");
            }
            cfg.fed.unique_pool[client] = it->get<std::vector<int>>();
        }
    }
    read_key(doc, "num_tasks", cfg.fed.num_tasks);
    read_key(doc, "images_per_client", cfg.data.images_per_client);
    int image_size = cfg.data.height;
    read_key(doc, "image_size", image_size);
    cfg.data.height = cfg.data.width = image_size;
    read_key(doc, "beta", cfg.fed.server.beta);
    read_key(doc, "beta1", cfg.fed.server.beta1);
    read_key(doc, "beta2", cfg.fed.server.beta2);
    read_key(doc, "server_steps_per_round", cfg.fed.server.server_steps_per_round);
    read_key(doc, "js_bins", cfg.fed.server.js_bins);
    read_key(doc, "js_epsilon", cfg.fed.server.js_epsilon);
    read_key(doc, "lr", cfg.fed.server.lr);
    read_key(doc, "n_z", cfg.fed.hyper.n_z);
    read_key(doc, "hidden", cfg.fed.hyper.hidden);
    read_key(doc, "init_scale", cfg.fed.hyper.init_scale);
    read_key(doc, "out_dir", cfg.out_dir);

    cfg.data.num_clients = cfg.fed.num_clients;
    cfg.data.num_classes = cfg.fed.num_tasks;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return config_from_json(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json doc;
    doc["mode"] = mode_name(cfg.fed.mode);
    doc["seed"] = cfg.fed.seed;
    doc["num_clients"] = cfg.fed.num_clients;
    doc["local_epochs"] = cfg.fed.local_epochs;
    doc["rounds_per_task"] = cfg.fed.rounds_per_task;
    doc["shared_initial"] = cfg.fed.shared_initial;
    doc["shared_pool"] = cfg.fed.shared_pool;
    nlohmann::json up = nlohmann::json::object();
    for (const auto& [client, pool] : cfg.fed.unique_pool) {
        up[std::to_string(client)] = pool;
    }
    doc["unique_pool"] = std::move(up);
    doc["num_tasks"] = cfg.fed.num_tasks;
    doc["images_per_client"] = cfg.data.images_per_client;
    doc["image_size"] = cfg.data.height;
    doc["beta"] = cfg.fed.server.beta;
    doc["beta1"] = cfg.fed.server.beta1;
    doc["beta2"] = cfg.fed.server.beta2;
    doc["server_steps_per_round"] = cfg.fed.server.server_steps_per_round;
    doc["js_bins"] = cfg.fed.server.js_bins;
    doc["js_epsilon"] = cfg.fed.server.js_epsilon;
    doc["lr"] = cfg.fed.server.lr;
    doc["n_z"] = cfg.fed.hyper.n_z;
    doc["hidden"] = cfg.fed.hyper.hidden;
    doc["init_scale"] = cfg.fed.hyper.init_scale;
    doc["out_dir"] = cfg.out_dir;
    return doc;
}

}  // namespace feddah
