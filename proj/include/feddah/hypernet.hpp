#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "feddah/target_net.hpp"

namespace feddah {

// A task's key: a vector sampled once from N(mu, sigma^2), immutable after
// registration.
struct TaskIdentity {
    int task_id = 0;
    double mu = 0.0;
    double sigma = 0.0;
    Array z;
};

class TaskRegistry {
  public:
    explicit TaskRegistry(int n_z = 16) : n_z_(n_z) {}

    // Samples z ~ N(mu, sigma^2) i.i.d. per coordinate; mu defaults to the
    // task id, which keeps identities well separated.
    const TaskIdentity& register_task(int task_id, uint64_t seed,
                                      std::optional<double> mu = std::nullopt,
                                      double sigma = 0.1);
    const TaskIdentity& get(int task_id) const;
    bool has(int task_id) const { return identities_.count(task_id) > 0; }
    std::vector<int> task_ids() const;  // ascending
    int n_z() const { return n_z_; }
    size_t size() const { return identities_.size(); }

    const std::map<int, TaskIdentity>& all() const { return identities_; }
    void insert_raw(TaskIdentity identity);  // checkpoint restore

  private:
    int n_z_;
    std::map<int, TaskIdentity> identities_;
};

// Generation head for one target layer: per-input-slice projections into a
// hidden vector, a shared output projection to the slice weights, and a bias
// head fed by the mean hidden vector.
struct GenerationHead {
    std::vector<Array> w_in;  // n_in arrays, each hidden x embed
    std::vector<Array> b_in;  // n_in arrays, each hidden
    Array w_out;              // (f * n_out * f) x hidden
    Array b_out;              // f * n_out * f
    Array w_bias;             // n_out x hidden
    Array b_bias;             // n_out
};

// Linear map from a flattened kernel to an n_z vector, used to carry layer
// j's weights into layer j+1's embedding.
struct LayerEncoder {
    Array w;  // n_z x (n_out * n_in * f * f)
    Array b;  // n_z
};

struct HyperConfig {
    int n_z = 16;
    int hidden = 32;
    double init_scale = 0.05;
};

// All trainable parameters of the weight-generation network.
struct HyperParams {
    HyperConfig config;
    std::vector<GenerationHead> heads;     // one per target layer
    std::vector<LayerEncoder> encoders;    // one per target layer except the last

    // Canonical flat order used by the optimizer and checkpoints:
    // per layer: slice Wi/Bi pairs, then Wo, Bo, Wb, Bb, then the encoder.
    std::vector<Array> to_arrays() const;
    void from_arrays(std::vector<Array> arrays);
    std::vector<std::string> param_names() const;
    size_t param_count() const;
};

// Embedding length seen by layer j (0-based): (j + 1) * n_z.
int embedding_size(const HyperConfig& cfg, int layer_index);

HyperParams init_hyper(const TargetArchitecture& arch, const HyperConfig& cfg, uint64_t seed);
// Deep copy whose later mutation never affects the original.
HyperParams snapshot(const HyperParams& hyper);

// One layer's generation: slice i is w_out * (w_in[i] * e + b_in[i]) + b_out,
// reshaped into the conv layout; the bias comes from the mean hidden vector.
struct GeneratedLayer {
    Array kernel;  // n_out x n_in x f x f
    Array bias;    // n_out
};
GeneratedLayer generate_layer(const GenerationHead& head, const Array& embedding,
                              const LayerSpec& spec);
Array encode_layer(const LayerEncoder& encoder, const Array& kernel);

// Full generation for one identity; layer j > 0 consumes the previous
// embedding concatenated with the encoding of the layer just generated.
ParameterSet generate_model(const HyperParams& hyper, const TaskIdentity& identity,
                            const TargetArchitecture& arch);
ParameterSet generate_model(const HyperParams& hyper, const Array& z,
                            const TargetArchitecture& arch);
Array generate_flat(const HyperParams& hyper, const Array& z, const TargetArchitecture& arch);

// Taped generation. param_ids must follow the canonical order of to_arrays().
// Returns the flat generated vector (same layout as flatten()).
NodeId generate_flat_taped(Tape& tape, const HyperParams& shapes,
                           const std::vector<NodeId>& param_ids, const Array& z,
                           const TargetArchitecture& arch);
std::vector<NodeId> make_leaves(Tape& tape, const HyperParams& hyper);
// Leaves shifted by a constant displacement; gradients flow to the leaves.
std::vector<NodeId> make_lookahead(Tape& tape, const std::vector<NodeId>& leaves,
                                   const std::vector<Array>& delta);

// JSON checkpoint: every named parameter with shape + values, plus the task
// registry. Round-trips f64 exactly.
void save_checkpoint(const HyperParams& hyper, const TaskRegistry& registry,
                     const std::string& path);
std::pair<HyperParams, TaskRegistry> load_checkpoint(const std::string& path);

}  // namespace feddah
