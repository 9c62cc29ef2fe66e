#include "feddah/hypernet.hpp"

#include <fstream>

#include <json.hpp>

namespace feddah {

const TaskIdentity& TaskRegistry::register_task(int task_id, uint64_t seed,
                                                std::optional<double> mu, double sigma) {
    if (task_id < 1) throw ContractError("register_task: task_id must be >= 1");
    if (sigma < 0.0) throw ContractError("register_task: sigma must be >= 0");
    if (has(task_id)) {
        throw RegistrationError("task " + std::to_string(task_id) + " already registered");
    }
    TaskIdentity id;
    id.task_id = task_id;
    id.mu = mu.value_or(static_cast<double>(task_id));
    id.sigma = sigma;
    id.z = Array({n_z_});
    Rng rng(derive_seed(seed, {kSeedIdentity, static_cast<uint64_t>(task_id)}));
    for (double& v : id.z.data) v = rng.normal(id.mu, id.sigma);
    return identities_.emplace(task_id, std::move(id)).first->second;
}

const TaskIdentity& TaskRegistry::get(int task_id) const {
    auto it = identities_.find(task_id);
    if (it == identities_.end()) {
        throw TaskLookupError("task " + std::to_string(task_id) + " is not registered");
    }
    return it->second;
}

std::vector<int> TaskRegistry::task_ids() const {
    std::vector<int> ids;
    ids.reserve(identities_.size());
    for (const auto& [id, _] : identities_) ids.push_back(id);
    return ids;
}

void TaskRegistry::insert_raw(TaskIdentity identity) {
    if (has(identity.task_id)) {
        throw RegistrationError("task " + std::to_string(identity.task_id) +
                                " already registered");
    }
    if (static_cast<int>(identity.z.size()) != n_z_) {
        throw DimensionError("insert_raw: identity size does not match registry");
    }
    int id = identity.task_id;
    identities_.emplace(id, std::move(identity));
}

int embedding_size(const HyperConfig& cfg, int layer_index) {
    return (layer_index + 1) * cfg.n_z;
}

std::vector<Array> HyperParams::to_arrays() const {
    std::vector<Array> out;
    out.reserve(param_count());
    for (size_t j = 0; j < heads.size(); ++j) {
        const GenerationHead& h = heads[j];
        for (size_t i = 0; i < h.w_in.size(); ++i) {
            out.push_back(h.w_in[i]);
            out.push_back(h.b_in[i]);
        }
        out.push_back(h.w_out);
        out.push_back(h.b_out);
        out.push_back(h.w_bias);
        out.push_back(h.b_bias);
        if (j < encoders.size()) {
            out.push_back(encoders[j].w);
            out.push_back(encoders[j].b);
        }
    }
    return out;
}

void HyperParams::from_arrays(std::vector<Array> arrays) {
    size_t k = 0;
    auto take = [&](Array& dst) {
        if (k >= arrays.size()) throw DimensionError("from_arrays: too few arrays");
        require_same_shape(dst, arrays[k], "from_arrays");
        dst = std::move(arrays[k++]);
    };
    for (size_t j = 0; j < heads.size(); ++j) {
        GenerationHead& h = heads[j];
        for (size_t i = 0; i < h.w_in.size(); ++i) {
            take(h.w_in[i]);
            take(h.b_in[i]);
        }
        take(h.w_out);
        take(h.b_out);
        take(h.w_bias);
        take(h.b_bias);
        if (j < encoders.size()) {
            take(encoders[j].w);
            take(encoders[j].b);
        }
    }
    if (k != arrays.size()) throw DimensionError("from_arrays: too many arrays");
}

std::vector<std::string> HyperParams::param_names() const {
    std::vector<std::string> names;
    names.reserve(param_count());
    for (size_t j = 0; j < heads.size(); ++j) {
        std::string prefix = "layer" + std::to_string(j + 1) + ".";
        const GenerationHead& h = heads[j];
        for (size_t i = 0; i < h.w_in.size(); ++i) {
            std::string slice = prefix + "slice" + std::to_string(i + 1) + ".";
            names.push_back(slice + "Wi");
            names.push_back(slice + "Bi");
        }
        names.push_back(prefix + "Wo");
        names.push_back(prefix + "Bo");
        names.push_back(prefix + "Wb");
        names.push_back(prefix + "Bb");
        if (j < encoders.size()) {
            names.push_back(prefix + "enc.W");
            names.push_back(prefix + "enc.b");
        }
    }
    return names;
}

size_t HyperParams::param_count() const {
    size_t n = 0;
    for (size_t j = 0; j < heads.size(); ++j) {
        n += heads[j].w_in.size() * 2 + 4;
        if (j < encoders.size()) n += 2;
    }
    return n;
}

HyperParams init_hyper(const TargetArchitecture& arch, const HyperConfig& cfg, uint64_t seed) {
    arch.validate();
    if (cfg.n_z < 1 || cfg.hidden < 1) throw ContractError("init_hyper: invalid sizes");
    HyperParams hyper;
    hyper.config = cfg;
    int num_layers = arch.num_layers();
    for (int j = 0; j < num_layers; ++j) {
        const LayerSpec& spec = arch.layers[j];
        int embed = embedding_size(cfg, j);
        int slice_len = spec.f_s * spec.n_out * spec.f_s;
        GenerationHead head;
        for (int i = 0; i < spec.n_in; ++i) {
            head.w_in.push_back(Array({cfg.hidden, embed}));
            head.b_in.push_back(Array({cfg.hidden}));
        }
        head.w_out = Array({slice_len, cfg.hidden});
        head.b_out = Array({slice_len});
        head.w_bias = Array({spec.n_out, cfg.hidden});
        head.b_bias = Array({spec.n_out});
        hyper.heads.push_back(std::move(head));
        if (j + 1 < num_layers) {
            LayerEncoder enc;
            enc.w = Array({cfg.n_z, spec.n_out * spec.n_in * spec.f_s * spec.f_s});
            enc.b = Array({cfg.n_z});
            hyper.encoders.push_back(std::move(enc));
        }
    }
    Rng rng(derive_seed(seed, {kSeedHyperInit}));
    std::vector<Array> arrays = hyper.to_arrays();
    for (Array& a : arrays) {
        for (double& v : a.data) v = rng.uniform(-cfg.init_scale, cfg.init_scale);
    }
    hyper.from_arrays(std::move(arrays));
    return hyper;
}

HyperParams snapshot(const HyperParams& hyper) { return hyper; }

namespace {

// Shared structure of the taped generation; the pure entry points run it
// with constant leaves so both paths produce bit-identical values.
struct LayerNodes {
    NodeId kernel;
    NodeId bias;
};

NodeId affine_vec(Tape& tape, NodeId w, NodeId b, NodeId x) {
    const Array& wv = tape.value(w);
    NodeId col = tape.reshape(x, {wv.shape[1], 1});
    NodeId y = tape.reshape(tape.matmul(w, col), {wv.shape[0]});
    return tape.add(y, b);
}

LayerNodes generate_layer_taped(Tape& tape, const LayerSpec& spec, int head_base,
                                const std::vector<NodeId>& ids, NodeId embedding) {
    std::vector<NodeId> hidden(spec.n_in);
    std::vector<NodeId> slices(spec.n_in);
    for (int i = 0; i < spec.n_in; ++i) {
        NodeId wi = ids[head_base + 2 * i];
        NodeId bi = ids[head_base + 2 * i + 1];
        hidden[i] = affine_vec(tape, wi, bi, embedding);
    }
    int out_base = head_base + 2 * spec.n_in;
    NodeId w_out = ids[out_base], b_out = ids[out_base + 1];
    NodeId w_bias = ids[out_base + 2], b_bias = ids[out_base + 3];
    for (int i = 0; i < spec.n_in; ++i) {
        slices[i] = affine_vec(tape, w_out, b_out, hidden[i]);
    }
    NodeId kernel = tape.assemble_kernel(slices, spec.n_out, spec.f_s);
    NodeId mean = hidden[0];
    for (int i = 1; i < spec.n_in; ++i) mean = tape.add(mean, hidden[i]);
    mean = tape.scale(mean, 1.0 / static_cast<double>(spec.n_in));
    NodeId bias = affine_vec(tape, w_bias, b_bias, mean);
    return {kernel, bias};
}

}  // namespace

NodeId generate_flat_taped(Tape& tape, const HyperParams& shapes,
                           const std::vector<NodeId>& param_ids, const Array& z,
                           const TargetArchitecture& arch) {
    arch.validate();
    if (shapes.heads.size() != arch.layers.size()) {
        throw DimensionError("generate: head count does not match architecture");
    }
    if (static_cast<int>(z.size()) != shapes.config.n_z) {
        throw DimensionError("generate: identity size does not match n_z");
    }
    if (param_ids.size() != shapes.param_count()) {
        throw DimensionError("generate: parameter node count mismatch");
    }
    std::vector<NodeId> flat_parts;
    NodeId embedding = tape.constant(z);
    size_t base = 0;
    for (int j = 0; j < arch.num_layers(); ++j) {
        const LayerSpec& spec = arch.layers[j];
        LayerNodes gen = generate_layer_taped(tape, spec, static_cast<int>(base), param_ids,
                                              embedding);
        size_t head_params = static_cast<size_t>(spec.n_in) * 2 + 4;
        base += head_params;
        flat_parts.push_back(tape.reshape(gen.kernel,
                                          {spec.n_out * spec.n_in * spec.f_s * spec.f_s}));
        flat_parts.push_back(gen.bias);
        if (j + 1 < arch.num_layers()) {
            NodeId enc_w = param_ids[base];
            NodeId enc_b = param_ids[base + 1];
            base += 2;
            NodeId kflat = tape.reshape(gen.kernel,
                                        {spec.n_out * spec.n_in * spec.f_s * spec.f_s});
            NodeId zprime = affine_vec(tape, enc_w, enc_b, kflat);
            embedding = tape.concat({embedding, zprime});
        }
    }
    return tape.concat(flat_parts);
}

std::vector<NodeId> make_leaves(Tape& tape, const HyperParams& hyper) {
    std::vector<Array> arrays = hyper.to_arrays();
    std::vector<NodeId> ids;
    ids.reserve(arrays.size());
    for (Array& a : arrays) ids.push_back(tape.leaf(std::move(a)));
    return ids;
}

std::vector<NodeId> make_lookahead(Tape& tape, const std::vector<NodeId>& leaves,
                                   const std::vector<Array>& delta) {
    if (delta.size() != leaves.size()) throw DimensionError("lookahead: delta count mismatch");
    std::vector<NodeId> out;
    out.reserve(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
        out.push_back(tape.add(leaves[i], tape.constant(delta[i])));
    }
    return out;
}

GeneratedLayer generate_layer(const GenerationHead& head, const Array& embedding,
                              const LayerSpec& spec) {
    if (static_cast<int>(head.w_in.size()) != spec.n_in) {
        throw DimensionError("generate_layer: slice count does not match n_in");
    }
    if (head.w_in[0].shape[1] != static_cast<int>(embedding.size())) {
        throw DimensionError("generate_layer: embedding length mismatch");
    }
    Tape tape;
    std::vector<NodeId> ids;
    for (int i = 0; i < spec.n_in; ++i) {
        ids.push_back(tape.constant(head.w_in[i]));
        ids.push_back(tape.constant(head.b_in[i]));
    }
    ids.push_back(tape.constant(head.w_out));
    ids.push_back(tape.constant(head.b_out));
    ids.push_back(tape.constant(head.w_bias));
    ids.push_back(tape.constant(head.b_bias));
    NodeId e = tape.constant(embedding);
    LayerNodes nodes = generate_layer_taped(tape, spec, 0, ids, e);
    return {tape.value(nodes.kernel), tape.value(nodes.bias)};
}

Array encode_layer(const LayerEncoder& encoder, const Array& kernel) {
    if (static_cast<int>(kernel.size()) != encoder.w.shape[1]) {
        throw DimensionError("encode_layer: kernel size does not match encoder");
    }
    Tape tape;
    NodeId w = tape.constant(encoder.w);
    NodeId b = tape.constant(encoder.b);
    NodeId kflat = tape.constant(Array({static_cast<int>(kernel.size())}, kernel.data));
    NodeId z = affine_vec(tape, w, b, kflat);
    return tape.value(z);
}

Array generate_flat(const HyperParams& hyper, const Array& z, const TargetArchitecture& arch) {
    Tape tape;
    std::vector<Array> arrays = hyper.to_arrays();
    std::vector<NodeId> ids;
    ids.reserve(arrays.size());
    for (Array& a : arrays) ids.push_back(tape.constant(std::move(a)));
    NodeId flat = generate_flat_taped(tape, hyper, ids, z, arch);
    return tape.value(flat);
}

ParameterSet generate_model(const HyperParams& hyper, const Array& z,
                            const TargetArchitecture& arch) {
    return unflatten(arch, generate_flat(hyper, z, arch));
}

ParameterSet generate_model(const HyperParams& hyper, const TaskIdentity& identity,
                            const TargetArchitecture& arch) {
    return generate_model(hyper, identity.z, arch);
}

namespace {

nlohmann::json array_to_json(const Array& a) {
    nlohmann::json j;
    j["shape"] = a.shape;
    j["data"] = a.data;
    return j;
}

Array array_from_json(const nlohmann::json& j) {
    return Array(j.at("shape").get<std::vector<int>>(),
                 j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const HyperParams& hyper, const TaskRegistry& registry,
                     const std::string& path) {
    nlohmann::json doc;
    doc["n_z"] = hyper.config.n_z;
    doc["hidden"] = hyper.config.hidden;
    doc["init_scale"] = hyper.config.init_scale;
    nlohmann::json params = nlohmann::json::object();
    std::vector<std::string> names = hyper.param_names();
    std::vector<Array> arrays = hyper.to_arrays();
    for (size_t i = 0; i < names.size(); ++i) params[names[i]] = array_to_json(arrays[i]);
    doc["params"] = std::move(params);
    // Layer structure needed to rebuild the shapes on load.
    nlohmann::json layers = nlohmann::json::array();
    for (const GenerationHead& h : hyper.heads) {
        layers.push_back({{"n_in", static_cast<int>(h.w_in.size())},
                          {"n_out", h.b_bias.shape[0]},
                          {"slice_len", h.b_out.shape[0]}});
    }
    doc["layers"] = std::move(layers);
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& [task_id, identity] : registry.all()) {
        ids.push_back({{"task_id", task_id},
                       {"mu", identity.mu},
                       {"sigma", identity.sigma},
                       {"z", identity.z.data}});
    }
    doc["identities"] = std::move(ids);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open checkpoint file for writing: " + path);
    out << doc.dump(1) << "\n";
}

std::pair<HyperParams, TaskRegistry> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint file: " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    HyperConfig cfg;
    cfg.n_z = doc.at("n_z").get<int>();
    cfg.hidden = doc.at("hidden").get<int>();
    cfg.init_scale = doc.at("init_scale").get<double>();
    HyperParams hyper;
    hyper.config = cfg;
    const nlohmann::json& params = doc.at("params");
    size_t num_layers = doc.at("layers").size();
    for (size_t j = 0; j < num_layers; ++j) {
        const nlohmann::json& lj = doc.at("layers")[j];
        int n_in = lj.at("n_in").get<int>();
        std::string prefix = "layer" + std::to_string(j + 1) + ".";
        GenerationHead head;
        for (int i = 0; i < n_in; ++i) {
            std::string slice = prefix + "slice" + std::to_string(i + 1) + ".";
            head.w_in.push_back(array_from_json(params.at(slice + "Wi")));
            head.b_in.push_back(array_from_json(params.at(slice + "Bi")));
        }
        head.w_out = array_from_json(params.at(prefix + "Wo"));
        head.b_out = array_from_json(params.at(prefix + "Bo"));
        head.w_bias = array_from_json(params.at(prefix + "Wb"));
        head.b_bias = array_from_json(params.at(prefix + "Bb"));
        hyper.heads.push_back(std::move(head));
        if (j + 1 < num_layers) {
            LayerEncoder enc;
            enc.w = array_from_json(params.at(prefix + "enc.W"));
            enc.b = array_from_json(params.at(prefix + "enc.b"));
            hyper.encoders.push_back(std::move(enc));
        }
    }
    TaskRegistry registry(cfg.n_z);
    for (const nlohmann::json& ij : doc.at("identities")) {
        TaskIdentity id;
        id.task_id = ij.at("task_id").get<int>();
        id.mu = ij.at("mu").get<double>();
        id.sigma = ij.at("sigma").get<double>();
        id.z = Array({cfg.n_z}, ij.at("z").get<std::vector<double>>());
        registry.insert_raw(std::move(id));
    }
    return {std::move(hyper), std::move(registry)};
}

}  // namespace feddah
