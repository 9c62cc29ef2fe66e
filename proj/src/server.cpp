#include "feddah/server.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "feddah/detmath.hpp"

namespace feddah {

void ServerConfig::validate() const {
    if (beta < 0.0 || beta1 < 0.0 || beta2 < 0.0) {
        throw ConfigError("server config: beta values must be >= 0");
    }
    if (server_steps_per_round < 1) {
        throw ConfigError("server config: server_steps_per_round must be >= 1");
    }
    if (js_bins < 2) throw ConfigError("server config: js_bins must be >= 2");
    if (js_epsilon <= 0.0) throw ConfigError("server config: js_epsilon must be > 0");
    if (lr <= 0.0) throw ConfigError("server config: lr must be > 0");
}

const ParameterSet& BasicModelRegistry::get(int task_id) const {
    auto it = entries_.find(task_id);
    if (it == entries_.end()) {
        throw TaskLookupError("no basic model for task " + std::to_string(task_id));
    }
    return it->second.model;
}

void BasicModelRegistry::put(int task_id, ParameterSet model, int round_index) {
    auto it = entries_.find(task_id);
    if (it == entries_.end()) {
        entries_.emplace(task_id, Entry{std::move(model), round_index});
    } else {
        it->second.model = std::move(model);
    }
}

std::vector<int> BasicModelRegistry::task_ids() const {
    std::vector<int> ids;
    ids.reserve(entries_.size());
    for (const auto& [id, _] : entries_) ids.push_back(id);
    return ids;
}

int BasicModelRegistry::inserted_round(int task_id) const {
    auto it = entries_.find(task_id);
    if (it == entries_.end()) {
        throw TaskLookupError("no basic model for task " + std::to_string(task_id));
    }
    return it->second.first_round;
}

double js_divergence_hist(const std::vector<double>& p, const std::vector<double>& q,
                          double eps) {
    if (p.size() != q.size()) throw DimensionError("js: histogram sizes differ");
    if (p.empty()) throw ContractError("js: empty histograms");
    double psum = 0.0, qsum = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw ContractError("js: negative histogram mass");
        psum += p[i] + eps;
        qsum += q[i] + eps;
    }
    double kl_p = 0.0, kl_q = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = (p[i] + eps) / psum;
        double qi = (q[i] + eps) / qsum;
        double mi = 0.5 * (pi + qi);
        kl_p += pi * det_log2(pi / mi);
        kl_q += qi * det_log2(qi / mi);
    }
    double js = 0.5 * kl_p + 0.5 * kl_q;
    return std::min(1.0, std::max(0.0, js));
}

double js_divergence(const Array& p_flat, const Array& q_flat, const ServerConfig& cfg) {
    require_same_shape(p_flat, q_flat, "js_divergence");
    double lo = p_flat.data[0], hi = p_flat.data[0];
    for (double v : p_flat.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : q_flat.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return 0.0;  // identical delta histograms
    int bins = cfg.js_bins;
    std::vector<double> hp(bins, 0.0), hq(bins, 0.0);
    double inv_width = static_cast<double>(bins) / (hi - lo);
    auto bin_of = [&](double v) {
        int b = static_cast<int>((v - lo) * inv_width);
        return std::min(b, bins - 1);
    };
    for (double v : p_flat.data) hp[bin_of(v)] += 1.0;
    for (double v : q_flat.data) hq[bin_of(v)] += 1.0;
    return js_divergence_hist(hp, hq, cfg.js_epsilon);
}

double js_divergence(const ParameterSet& p, const ParameterSet& q, const ServerConfig& cfg) {
    return js_divergence(flatten(p), flatten(q), cfg);
}

double similarity_weight(const ParameterSet& generated, const ParameterSet& basic,
                         const ServerConfig& cfg) {
    return 1.0 - js_divergence(generated, basic, cfg);
}

double l_task(const HyperParams& hyper, const Array& z, const Array& target_flat,
              const TargetArchitecture& arch) {
    Array gen = generate_flat(hyper, z, arch);
    return l2_squared(gen, target_flat);
}

std::vector<Array> l_task_grad(const HyperParams& hyper, const Array& z,
                               const Array& target_flat, const TargetArchitecture& arch,
                               double* value) {
    Tape tape;
    std::vector<NodeId> leaves = make_leaves(tape, hyper);
    NodeId gen = generate_flat_taped(tape, hyper, leaves, z, arch);
    NodeId loss = tape.l2s(gen, tape.constant(target_flat));
    tape.backward(loss);
    if (value) *value = tape.value(loss).data[0];
    std::vector<Array> grads;
    grads.reserve(leaves.size());
    for (NodeId id : leaves) grads.push_back(tape.grad(id));
    return grads;
}

std::vector<Array> candidate_change(const HyperParams& hyper, const Array& z,
                                    const Array& target_flat, const TargetArchitecture& arch,
                                    const ServerConfig& cfg) {
    std::vector<Array> grads = l_task_grad(hyper, z, target_flat, arch);
    AdamConfig ac;
    ac.lr = cfg.lr;
    return adam_lookahead(grads, ac);
}

namespace {

std::vector<PriorTask> sorted_priors(std::vector<PriorTask> priors) {
    std::sort(priors.begin(), priors.end(),
              [](const PriorTask& a, const PriorTask& b) { return a.task_id < b.task_id; });
    return priors;
}

Array snapshot_generation(const HyperParams& snap, const PriorTask& prior,
                          const TargetArchitecture& arch,
                          const std::map<int, Array>* snap_cache) {
    if (snap_cache) {
        auto it = snap_cache->find(prior.task_id);
        if (it != snap_cache->end()) return it->second;
    }
    return generate_flat(snap, prior.z, arch);
}

// Builds the mean-over-priors regularizer on the tape from lookahead leaves.
NodeId l_r_taped(Tape& tape, const HyperParams& shapes, const std::vector<NodeId>& lookahead,
                 const HyperParams& snap, const std::vector<PriorTask>& priors,
                 const TargetArchitecture& arch, const std::map<int, Array>* snap_cache) {
    NodeId acc = -1;
    for (const PriorTask& prior : priors) {
        NodeId gen = generate_flat_taped(tape, shapes, lookahead, prior.z, arch);
        NodeId ref = tape.constant(snapshot_generation(snap, prior, arch, snap_cache));
        NodeId term = tape.l2s(gen, ref);
        acc = acc < 0 ? term : tape.add(acc, term);
    }
    return tape.scale(acc, 1.0 / static_cast<double>(priors.size()));
}

}  // namespace

double l_r(const HyperParams& live, const HyperParams& snap, const std::vector<Array>& delta,
           const std::vector<PriorTask>& priors, const TargetArchitecture& arch,
           const std::map<int, Array>* snap_cache) {
    if (priors.empty()) return 0.0;
    std::vector<PriorTask> order = sorted_priors(priors);
    Tape tape;
    std::vector<NodeId> leaves;
    std::vector<Array> arrays = live.to_arrays();
    leaves.reserve(arrays.size());
    for (Array& a : arrays) leaves.push_back(tape.constant(std::move(a)));
    std::vector<NodeId> lookahead = make_lookahead(tape, leaves, delta);
    NodeId reg = l_r_taped(tape, live, lookahead, snap, order, arch, snap_cache);
    return tape.value(reg).data[0];
}

LossEval hyper_loss(const HyperParams& hyper, const Array& z, const Array& target_flat,
                    const HyperParams& snap, const std::vector<PriorTask>& priors,
                    const TargetArchitecture& arch, const ServerConfig& cfg,
                    bool want_grad, const std::vector<Array>* fixed_delta,
                    const std::map<int, Array>* snap_cache) {
    std::vector<PriorTask> order = sorted_priors(priors);
    Tape tape;
    std::vector<NodeId> leaves = make_leaves(tape, hyper);
    NodeId gen = generate_flat_taped(tape, hyper, leaves, z, arch);
    NodeId task_node = tape.l2s(gen, tape.constant(target_flat));

    LossEval eval;
    eval.task_term = tape.value(task_node).data[0];
    NodeId total = task_node;
    if (!order.empty() && cfg.beta != 0.0) {
        std::vector<Array> delta;
        if (fixed_delta) {
            delta = *fixed_delta;
        } else {
            tape.backward(task_node);
            std::vector<Array> grads;
            grads.reserve(leaves.size());
            for (NodeId id : leaves) grads.push_back(tape.grad(id));
            tape.zero_grads();
            AdamConfig ac;
            ac.lr = cfg.lr;
            delta = adam_lookahead(grads, ac);
        }
        std::vector<NodeId> lookahead = make_lookahead(tape, leaves, delta);
        NodeId reg = l_r_taped(tape, hyper, lookahead, snap, order, arch, snap_cache);
        eval.reg_term = tape.value(reg).data[0];
        total = tape.add(task_node, tape.scale(reg, cfg.beta));
    }
    eval.total = tape.value(total).data[0];
    if (want_grad) {
        tape.backward(total);
        eval.grad.reserve(leaves.size());
        for (NodeId id : leaves) eval.grad.push_back(tape.grad(id));
    }
    return eval;
}

LossEval recalibrated_loss(const HyperParams& hyper, const Array& z, const Array& basic_flat,
                           const Array& upload_flat, const HyperParams& snap,
                           const std::vector<PriorTask>& priors, const TargetArchitecture& arch,
                           const ServerConfig& cfg, bool want_grad,
                           std::optional<double> fixed_ws,
                           const std::vector<Array>* fixed_delta_a,
                           const std::vector<Array>* fixed_delta_b,
                           const std::map<int, Array>* snap_cache) {
    std::vector<PriorTask> order = sorted_priors(priors);
    Tape tape;
    std::vector<NodeId> leaves = make_leaves(tape, hyper);
    NodeId gen = generate_flat_taped(tape, hyper, leaves, z, arch);
    NodeId loss_basic = tape.l2s(gen, tape.constant(basic_flat));
    NodeId loss_new = tape.l2s(gen, tape.constant(upload_flat));

    LossEval eval;
    if (fixed_ws) {
        eval.w_s = *fixed_ws;
    } else if (cfg.force_ws_one) {
        eval.w_s = 1.0;
    } else {
        eval.w_s = 1.0 - js_divergence(tape.value(gen), basic_flat, cfg);
    }
    eval.task_term = tape.value(loss_basic).data[0];

    auto candidate = [&](NodeId loss_node, const std::vector<Array>* fixed) {
        if (fixed) return *fixed;
        tape.backward(loss_node);
        std::vector<Array> grads;
        grads.reserve(leaves.size());
        for (NodeId id : leaves) grads.push_back(tape.grad(id));
        tape.zero_grads();
        AdamConfig ac;
        ac.lr = cfg.lr;
        return adam_lookahead(grads, ac);
    };

    NodeId branch_a = loss_basic;
    if (!order.empty() && cfg.beta1 != 0.0) {
        std::vector<Array> delta_a = candidate(loss_basic, fixed_delta_a);
        std::vector<NodeId> look_a = make_lookahead(tape, leaves, delta_a);
        NodeId reg_a = l_r_taped(tape, hyper, look_a, snap, order, arch, snap_cache);
        eval.reg_term = tape.value(reg_a).data[0];
        branch_a = tape.add(loss_basic, tape.scale(reg_a, cfg.beta1));
    }
    NodeId branch_b = loss_new;
    if (!order.empty() && cfg.beta2 != 0.0) {
        std::vector<Array> delta_b = candidate(loss_new, fixed_delta_b);
        std::vector<NodeId> look_b = make_lookahead(tape, leaves, delta_b);
        NodeId reg_b = l_r_taped(tape, hyper, look_b, snap, order, arch, snap_cache);
        eval.reg2_term = tape.value(reg_b).data[0];
        branch_b = tape.add(loss_new, tape.scale(reg_b, cfg.beta2));
    }
    NodeId total = tape.add(tape.scale(branch_a, eval.w_s),
                            tape.scale(branch_b, 1.0 - eval.w_s));
    eval.total = tape.value(total).data[0];
    if (want_grad) {
        tape.backward(total);
        eval.grad.reserve(leaves.size());
        for (NodeId id : leaves) eval.grad.push_back(tape.grad(id));
    }
    return eval;
}

LossEval recalibrated_loss(const HyperParams& hyper, const TaskIdentity& identity,
                           const BasicModelRegistry& registry, const ParameterSet& upload,
                           const HyperParams& snap, const std::vector<PriorTask>& priors,
                           const TargetArchitecture& arch, const ServerConfig& cfg) {
    if (!registry.has(identity.task_id)) {
        throw ContractError("recalibrated_loss: task " + std::to_string(identity.task_id) +
                            " has no basic model");
    }
    return recalibrated_loss(hyper, identity.z, flatten(registry.get(identity.task_id)),
                             flatten(upload), snap, priors, arch, cfg);
}

RoundReport server_round(HyperParams& hyper, BasicModelRegistry& registry,
                         const std::vector<Upload>& uploads, const HyperParams& snap,
                         const TaskRegistry& tasks, AdamState& adam,
                         const TargetArchitecture& arch, const ServerConfig& cfg,
                         int round_index, const std::map<int, Array>* snap_cache) {
    cfg.validate();
    if (uploads.empty()) throw ContractError("server_round: no uploads");
    std::set<std::pair<int, int>> seen;
    for (const Upload& u : uploads) {
        if (!tasks.has(u.task_id)) {
            throw TaskLookupError("server_round: task " + std::to_string(u.task_id) +
                                  " is not registered");
        }
        u.weights.require_matches(arch);
        if (!seen.emplace(u.task_id, u.client_id).second) {
            throw ContractError("server_round: duplicate (task, client) in one round");
        }
    }
    std::vector<size_t> order(uploads.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const Upload& ua = uploads[a];
        const Upload& ub = uploads[b];
        if (ua.task_id != ub.task_id) return ua.task_id < ub.task_id;
        return ua.client_id < ub.client_id;
    });

    RoundReport report;
    for (size_t idx : order) {
        const Upload& upload = uploads[idx];
        const TaskIdentity& identity = tasks.get(upload.task_id);
        Array upload_flat = flatten(upload.weights);

        std::vector<PriorTask> priors;
        for (int t : registry.task_ids()) {
            if (t == upload.task_id) continue;
            priors.push_back({t, tasks.get(t).z});
        }

        UploadReport ur;
        ur.task_id = upload.task_id;
        ur.client_id = upload.client_id;
        ur.recalibrated = registry.has(upload.task_id);

        if (!ur.recalibrated) {
            for (int s = 0; s < cfg.server_steps_per_round; ++s) {
                LossEval eval = hyper_loss(hyper, identity.z, upload_flat, snap, priors, arch,
                                           cfg, true, nullptr, snap_cache);
                if (s == 0) ur.initial_loss = eval.total;
                std::vector<Array> params = hyper.to_arrays();
                adam_step(params, eval.grad, adam);
                hyper.from_arrays(std::move(params));
            }
            LossEval final_eval = hyper_loss(hyper, identity.z, upload_flat, snap, priors, arch,
                                             cfg, false, nullptr, snap_cache);
            ur.final_loss = final_eval.total;
        } else {
            Array basic_flat = flatten(registry.get(upload.task_id));
            // W_s is measured once per upload, before any step of this round.
            double ws;
            if (cfg.force_ws_one) {
                ws = 1.0;
            } else {
                ws = 1.0 - js_divergence(generate_flat(hyper, identity.z, arch), basic_flat, cfg);
            }
            ur.w_s = ws;
            for (int s = 0; s < cfg.server_steps_per_round; ++s) {
                LossEval eval = recalibrated_loss(hyper, identity.z, basic_flat, upload_flat,
                                                  snap, priors, arch, cfg, true, ws, nullptr,
                                                  nullptr, snap_cache);
                if (s == 0) ur.initial_loss = eval.total;
                std::vector<Array> params = hyper.to_arrays();
                adam_step(params, eval.grad, adam);
                hyper.from_arrays(std::move(params));
            }
            LossEval final_eval = recalibrated_loss(hyper, identity.z, basic_flat, upload_flat,
                                                    snap, priors, arch, cfg, false, ws, nullptr,
                                                    nullptr, snap_cache);
            ur.final_loss = final_eval.total;
        }
        registry.put(upload.task_id, generate_model(hyper, identity.z, arch), round_index);
        report.uploads.push_back(std::move(ur));
    }
    return report;
}

}  // namespace feddah
