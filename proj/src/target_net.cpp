#include "feddah/target_net.hpp"

#include <string>

namespace feddah {

size_t TargetArchitecture::param_count() const {
    size_t n = 0;
    for (const LayerSpec& l : layers) {
        n += static_cast<size_t>(l.n_in) * l.n_out * l.f_s * l.f_s + l.n_out;
    }
    return n;
}

void TargetArchitecture::validate() const {
    if (layers.empty()) throw ContractError("architecture: no layers");
    for (size_t j = 0; j < layers.size(); ++j) {
        const LayerSpec& l = layers[j];
        if (l.n_in < 1 || l.n_out < 1 || l.f_s < 1) {
            throw ContractError("architecture: invalid layer " + std::to_string(j));
        }
        if (j + 1 < layers.size() && layers[j + 1].n_in != l.n_out) {
            throw DimensionError("architecture: layer " + std::to_string(j) +
                                 " output channels do not feed layer " + std::to_string(j + 1));
        }
    }
}

void TargetArchitecture::validate_for_forward() const {
    validate();
    for (const LayerSpec& l : layers) {
        if (l.f_s != 3) throw ContractError("architecture: convolution requires f_s == 3");
    }
}

TargetArchitecture tinyseg_architecture() {
    TargetArchitecture arch;
    arch.layers = {
        {1, 8, 3, Activation::kRelu},
        {8, 8, 3, Activation::kRelu},
        {8, 15, 3, Activation::kSigmoid},
    };
    return arch;
}

bool ParameterSet::matches(const TargetArchitecture& arch) const {
    if (layers.size() != arch.layers.size()) return false;
    for (size_t j = 0; j < layers.size(); ++j) {
        const LayerSpec& s = arch.layers[j];
        std::vector<int> kshape{s.n_out, s.n_in, s.f_s, s.f_s};
        if (layers[j].kernel.shape != kshape) return false;
        if (layers[j].bias.shape != std::vector<int>{s.n_out}) return false;
    }
    return true;
}

void ParameterSet::require_matches(const TargetArchitecture& arch) const {
    if (!matches(arch)) throw DimensionError("parameter set does not match architecture");
}

size_t ParameterSet::total_size() const {
    size_t n = 0;
    for (const Layer& l : layers) n += l.kernel.size() + l.bias.size();
    return n;
}

std::vector<Array> ParameterSet::to_arrays() const {
    std::vector<Array> out;
    out.reserve(layers.size() * 2);
    for (const Layer& l : layers) {
        out.push_back(l.kernel);
        out.push_back(l.bias);
    }
    return out;
}

ParameterSet ParameterSet::from_arrays(const TargetArchitecture& arch, std::vector<Array> arrays) {
    if (arrays.size() != arch.layers.size() * 2) {
        throw DimensionError("from_arrays: wrong array count");
    }
    ParameterSet p;
    for (size_t j = 0; j < arch.layers.size(); ++j) {
        p.layers.push_back({std::move(arrays[2 * j]), std::move(arrays[2 * j + 1])});
    }
    p.require_matches(arch);
    return p;
}

ParameterSet zero_params(const TargetArchitecture& arch) {
    ParameterSet p;
    for (const LayerSpec& s : arch.layers) {
        p.layers.push_back({Array({s.n_out, s.n_in, s.f_s, s.f_s}), Array({s.n_out})});
    }
    return p;
}

ParameterSet init_params(const TargetArchitecture& arch, uint64_t seed, double scale) {
    ParameterSet p = zero_params(arch);
    Rng rng(seed);
    for (auto& layer : p.layers) {
        for (double& v : layer.kernel.data) v = rng.uniform(-scale, scale);
        for (double& v : layer.bias.data) v = rng.uniform(-scale, scale);
    }
    return p;
}

Array flatten(const ParameterSet& params) {
    Array flat({static_cast<int>(params.total_size())});
    size_t off = 0;
    for (const auto& layer : params.layers) {
        std::copy(layer.kernel.data.begin(), layer.kernel.data.end(), flat.data.begin() + off);
        off += layer.kernel.size();
        std::copy(layer.bias.data.begin(), layer.bias.data.end(), flat.data.begin() + off);
        off += layer.bias.size();
    }
    return flat;
}

ParameterSet unflatten(const TargetArchitecture& arch, const Array& flat) {
    if (flat.size() != arch.param_count()) {
        throw DimensionError("unflatten: expected " + std::to_string(arch.param_count()) +
                             " values, got " + std::to_string(flat.size()));
    }
    ParameterSet p = zero_params(arch);
    size_t off = 0;
    for (auto& layer : p.layers) {
        std::copy(flat.data.begin() + off, flat.data.begin() + off + layer.kernel.size(),
                  layer.kernel.data.begin());
        off += layer.kernel.size();
        std::copy(flat.data.begin() + off, flat.data.begin() + off + layer.bias.size(),
                  layer.bias.data.begin());
        off += layer.bias.size();
    }
    return p;
}

double l2_squared(const ParameterSet& a, const ParameterSet& b) {
    if (a.layers.size() != b.layers.size()) {
        throw DimensionError("l2_squared: layer count mismatch");
    }
    double acc = 0.0;
    for (size_t j = 0; j < a.layers.size(); ++j) {
        acc += l2_squared(a.layers[j].kernel, b.layers[j].kernel);
        acc += l2_squared(a.layers[j].bias, b.layers[j].bias);
    }
    return acc;
}

ParameterSet average(const std::vector<const ParameterSet*>& sets) {
    if (sets.empty()) throw ContractError("average: no parameter sets");
    ParameterSet out = *sets[0];
    for (size_t k = 1; k < sets.size(); ++k) {
        const ParameterSet& s = *sets[k];
        if (s.layers.size() != out.layers.size()) {
            throw DimensionError("average: layer count mismatch");
        }
        for (size_t j = 0; j < out.layers.size(); ++j) {
            require_same_shape(out.layers[j].kernel, s.layers[j].kernel, "average");
            for (size_t i = 0; i < out.layers[j].kernel.size(); ++i) {
                out.layers[j].kernel.data[i] += s.layers[j].kernel.data[i];
            }
            for (size_t i = 0; i < out.layers[j].bias.size(); ++i) {
                out.layers[j].bias.data[i] += s.layers[j].bias.data[i];
            }
        }
    }
    double inv = 1.0 / static_cast<double>(sets.size());
    for (auto& layer : out.layers) {
        for (double& v : layer.kernel.data) v *= inv;
        for (double& v : layer.bias.data) v *= inv;
    }
    return out;
}

namespace {

Array apply_activation(Array x, Activation act) {
    switch (act) {
        case Activation::kRelu: return relu(x);
        case Activation::kSigmoid: return sigmoid(x);
        case Activation::kNone: return x;
    }
    return x;
}

}  // namespace

Array forward(const TargetArchitecture& arch, const ParameterSet& params, const Array& images) {
    arch.validate_for_forward();
    params.require_matches(arch);
    if (images.shape.size() != 4) throw DimensionError("forward: images must be B x C x H x W");
    int b = images.shape[0], c_in = images.shape[1], h = images.shape[2], w = images.shape[3];
    if (c_in != arch.layers.front().n_in) {
        throw DimensionError("forward: input channel mismatch");
    }
    int c_out = arch.layers.back().n_out;
    Array out({b, c_out, h, w});
    size_t in_plane = static_cast<size_t>(c_in) * h * w;
    size_t out_plane = static_cast<size_t>(c_out) * h * w;
    for (int i = 0; i < b; ++i) {
        Array x({c_in, h, w});
        std::copy(images.data.begin() + i * in_plane, images.data.begin() + (i + 1) * in_plane,
                  x.data.begin());
        for (size_t j = 0; j < arch.layers.size(); ++j) {
            x = apply_activation(conv2d(x, params.layers[j].kernel, params.layers[j].bias),
                                 arch.layers[j].activation);
        }
        std::copy(x.data.begin(), x.data.end(), out.data.begin() + i * out_plane);
    }
    return out;
}

NodeId forward_taped(Tape& tape, const TargetArchitecture& arch,
                     const std::vector<NodeId>& param_ids, NodeId image) {
    arch.validate_for_forward();
    if (param_ids.size() != arch.layers.size() * 2) {
        throw DimensionError("forward_taped: wrong parameter node count");
    }
    NodeId x = image;
    for (size_t j = 0; j < arch.layers.size(); ++j) {
        x = tape.conv2d(x, param_ids[2 * j], param_ids[2 * j + 1]);
        switch (arch.layers[j].activation) {
            case Activation::kRelu: x = tape.relu(x); break;
            case Activation::kSigmoid: x = tape.sigmoid(x); break;
            case Activation::kNone: break;
        }
    }
    return x;
}

namespace {
constexpr double kDiceEps = 1e-6;
}

NodeId soft_dice_loss_taped(Tape& tape, NodeId pred, NodeId mask) {
    require_same_shape(tape.value(pred), tape.value(mask), "soft_dice_loss");
    NodeId inter = tape.sum(tape.mul(pred, mask));
    NodeId num = tape.add_scalar(tape.scale(inter, 2.0), kDiceEps);
    NodeId den = tape.add_scalar(tape.add(tape.sum(pred), tape.sum(mask)), kDiceEps);
    return tape.sub(tape.constant(Array::scalar(1.0)), tape.div(num, den));
}

double soft_dice_loss(const Array& pred, const Array& mask) {
    require_same_shape(pred, mask, "soft_dice_loss");
    double inter = 0.0, ps = 0.0, ms = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        inter += pred.data[i] * mask.data[i];
        ps += pred.data[i];
        ms += mask.data[i];
    }
    return 1.0 - (2.0 * inter + kDiceEps) / (ps + ms + kDiceEps);
}

double dice_score(const Array& pred_binary, const Array& mask) {
    require_same_shape(pred_binary, mask, "dice_score");
    size_t p = 0, m = 0, inter = 0;
    for (size_t i = 0; i < pred_binary.size(); ++i) {
        double pv = pred_binary.data[i];
        double mv = mask.data[i];
        if ((pv != 0.0 && pv != 1.0) || (mv != 0.0 && mv != 1.0)) {
            throw ContractError("dice_score: inputs must be binary");
        }
        p += pv == 1.0;
        m += mv == 1.0;
        inter += (pv == 1.0 && mv == 1.0);
    }
    if (p + m == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + m);
}

Array binarize(const Array& prob) {
    Array out(prob.shape);
    for (size_t i = 0; i < prob.size(); ++i) out.data[i] = prob.data[i] > 0.5 ? 1.0 : 0.0;
    return out;
}

TrainReport train_local(const TargetArchitecture& arch, ParameterSet& params,
                        const std::vector<SegBatch>& shard, int epochs, AdamState& adam) {
    if (shard.empty()) throw ContractError("train_local: empty shard");
    if (epochs < 1) throw ContractError("train_local: epochs must be >= 1");
    arch.validate_for_forward();
    params.require_matches(arch);
    int c_out = arch.layers.back().n_out;
    TrainReport report;
    for (int e = 0; e < epochs; ++e) {
        double loss_sum = 0.0;
        size_t batches = 0;
        for (const SegBatch& batch : shard) {
            if (batch.supervised_channel < 0 || batch.supervised_channel >= c_out) {
                throw ContractError("train_local: supervised channel out of range");
            }
            int b = batch.images.shape[0];
            int h = batch.images.shape[2], w = batch.images.shape[3];
            size_t img_plane = static_cast<size_t>(batch.images.shape[1]) * h * w;
            size_t msk_plane = static_cast<size_t>(batch.masks.shape[1]) * h * w;
            for (int i = 0; i < b; ++i) {
                Tape tape;
                std::vector<Array> arrays = params.to_arrays();
                std::vector<NodeId> ids;
                ids.reserve(arrays.size());
                for (Array& a : arrays) ids.push_back(tape.leaf(std::move(a)));
                Array img({batch.images.shape[1], h, w});
                std::copy(batch.images.data.begin() + i * img_plane,
                          batch.images.data.begin() + (i + 1) * img_plane, img.data.begin());
                Array msk({h, w});
                size_t moff = i * msk_plane + static_cast<size_t>(batch.supervised_channel) * h * w;
                std::copy(batch.masks.data.begin() + moff,
                          batch.masks.data.begin() + moff + static_cast<size_t>(h) * w,
                          msk.data.begin());
                NodeId out = forward_taped(tape, arch, ids, tape.constant(std::move(img)));
                NodeId pred = tape.select_channel(out, batch.supervised_channel);
                NodeId loss = soft_dice_loss_taped(tape, pred, tape.constant(std::move(msk)));
                tape.backward(loss);
                loss_sum += tape.value(loss).data[0];
                batches += 1;
                std::vector<Array> grads;
                grads.reserve(ids.size());
                for (NodeId id : ids) grads.push_back(tape.grad(id));
                std::vector<Array> current = params.to_arrays();
                adam_step(current, grads, adam);
                params = ParameterSet::from_arrays(arch, std::move(current));
            }
        }
        report.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
    }
    return report;
}

}  // namespace feddah
