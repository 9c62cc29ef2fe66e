#pragma once

#include <cstdint>
#include <vector>

#include "feddah/adam.hpp"
#include "feddah/array.hpp"
#include "feddah/rng.hpp"
#include "feddah/tape.hpp"

namespace feddah {

enum class Activation { kRelu, kSigmoid, kNone };

struct LayerSpec {
    int n_in = 1;
    int n_out = 1;
    int f_s = 3;  // spatial kernel extent
    Activation activation = Activation::kNone;
};

// Ordered conv stack. The convolution path requires f_s == 3; smaller f_s is
// allowed for weight-generation tests that never run the net.
struct TargetArchitecture {
    std::vector<LayerSpec> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }
    size_t param_count() const;
    void validate() const;           // channel compatibility
    void validate_for_forward() const;  // additionally f_s == 3 everywhere
};

// The default client model: 1 input channel, 15 sigmoid output channels.
TargetArchitecture tinyseg_architecture();

// Per-layer kernel (n_out x n_in x f x f) and bias (n_out) arrays.
struct ParameterSet {
    struct Layer {
        Array kernel;
        Array bias;
    };
    std::vector<Layer> layers;

    bool matches(const TargetArchitecture& arch) const;
    void require_matches(const TargetArchitecture& arch) const;
    size_t total_size() const;
    // Canonical order: layer 0 kernel, layer 0 bias, layer 1 kernel, ...
    std::vector<Array> to_arrays() const;
    static ParameterSet from_arrays(const TargetArchitecture& arch, std::vector<Array> arrays);
};

ParameterSet zero_params(const TargetArchitecture& arch);
ParameterSet init_params(const TargetArchitecture& arch, uint64_t seed, double scale = 0.05);

Array flatten(const ParameterSet& params);
ParameterSet unflatten(const TargetArchitecture& arch, const Array& flat);

double l2_squared(const ParameterSet& a, const ParameterSet& b);
ParameterSet average(const std::vector<const ParameterSet*>& sets);

// One image with the full 15-channel mask; supervision selects one channel.
struct SegBatch {
    Array images;  // B x 1 x H x W in [0, 1]
    Array masks;   // B x C x H x W, binary
    int supervised_channel = 0;
};

// Pure inference: images (B x C_in x H x W) -> (B x C_out x H x W).
Array forward(const TargetArchitecture& arch, const ParameterSet& params, const Array& images);

// Taped single-image forward: input (C_in x H x W) -> (C_out x H x W).
NodeId forward_taped(Tape& tape, const TargetArchitecture& arch,
                     const std::vector<NodeId>& param_ids, NodeId image);

// 1 - (2*sum(p*m) + eps) / (sum(p) + sum(m) + eps), eps = 1e-6.
NodeId soft_dice_loss_taped(Tape& tape, NodeId pred, NodeId mask);
double soft_dice_loss(const Array& pred, const Array& mask);

// 2|P n M| / (|P| + |M|); 1.0 when both masks are empty. Inputs binary.
double dice_score(const Array& pred_binary, const Array& mask);
// Thresholds probabilities at > 0.5.
Array binarize(const Array& prob);

struct TrainReport {
    std::vector<double> epoch_mean_loss;
};

// E in-order passes over the shard, Adam on the supervised channel's soft
// Dice. Deterministic given the shard order.
TrainReport train_local(const TargetArchitecture& arch, ParameterSet& params,
                        const std::vector<SegBatch>& shard, int epochs, AdamState& adam);

}  // namespace feddah
