#pragma once

#include <map>
#include <optional>
#include <vector>

#include "feddah/hypernet.hpp"

namespace feddah {

struct ServerConfig {
    double beta = 0.01;   // weight of the history regularizer
    double beta1 = 0.01;  // history weight on the basic-model branch
    double beta2 = 0.01;  // history weight on the new-upload branch
    int server_steps_per_round = 10;
    int js_bins = 64;
    double js_epsilon = 1e-8;
    double lr = 1e-3;
    bool force_ws_one = false;  // similarity ablation

    void validate() const;
};

struct Upload {
    int client_id = 0;
    int task_id = 0;
    int round_index = 0;
    ParameterSet weights;
};

// Current standard weights per task; an entry exists once the server has
// processed at least one upload for that task.
class BasicModelRegistry {
  public:
    bool has(int task_id) const { return entries_.count(task_id) > 0; }
    const ParameterSet& get(int task_id) const;
    void put(int task_id, ParameterSet model, int round_index);
    std::vector<int> task_ids() const;  // ascending
    size_t size() const { return entries_.size(); }
    int inserted_round(int task_id) const;

  private:
    struct Entry {
        ParameterSet model;
        int first_round = 0;
    };
    std::map<int, Entry> entries_;
};

struct PriorTask {
    int task_id = 0;
    Array z;
};

// Jensen-Shannon divergence, base-2 logs, of epsilon-smoothed renormalized
// histograms. Bounded to [0, 1].
double js_divergence_hist(const std::vector<double>& p, const std::vector<double>& q,
                          double eps);
// Histograms both inputs over their shared min-max range before comparing.
double js_divergence(const Array& p_flat, const Array& q_flat, const ServerConfig& cfg);
double js_divergence(const ParameterSet& p, const ParameterSet& q, const ServerConfig& cfg);
// W_s = 1 - JS(generated, basic).
double similarity_weight(const ParameterSet& generated, const ParameterSet& basic,
                         const ServerConfig& cfg);

// L2 fit of the generated weights to a target model.
double l_task(const HyperParams& hyper, const Array& z, const Array& target_flat,
              const TargetArchitecture& arch);
std::vector<Array> l_task_grad(const HyperParams& hyper, const Array& z,
                               const Array& target_flat, const TargetArchitecture& arch,
                               double* value = nullptr);

// One fresh Adam step on the task loss alone; the displacement is treated as
// a constant everywhere it is consumed.
std::vector<Array> candidate_change(const HyperParams& hyper, const Array& z,
                                    const Array& target_flat, const TargetArchitecture& arch,
                                    const ServerConfig& cfg);

// Mean over prior tasks of || f(z_t, snapshot) - f(z_t, live + delta) ||^2.
// Returns 0 when there is no history. Priors are reduced in ascending task
// order regardless of input order. snap_cache, when given, maps task_id to
// the precomputed snapshot generation.
double l_r(const HyperParams& live, const HyperParams& snap, const std::vector<Array>& delta,
           const std::vector<PriorTask>& priors, const TargetArchitecture& arch,
           const std::map<int, Array>* snap_cache = nullptr);

struct LossEval {
    double total = 0.0;
    double task_term = 0.0;
    double reg_term = 0.0;   // branch-1 regularizer (or the only one)
    double reg2_term = 0.0;  // branch-2 regularizer (recalibration only)
    double w_s = 1.0;
    std::vector<Array> grad;  // empty unless want_grad
};

// L_task + beta * L_R, with the candidate change recomputed per call unless
// fixed_delta pins it (used by gradient checks).
LossEval hyper_loss(const HyperParams& hyper, const Array& z, const Array& target_flat,
                    const HyperParams& snap, const std::vector<PriorTask>& priors,
                    const TargetArchitecture& arch, const ServerConfig& cfg,
                    bool want_grad = true, const std::vector<Array>* fixed_delta = nullptr,
                    const std::map<int, Array>* snap_cache = nullptr);

// W_s [L_task(., basic) + beta1 L_R1] + (1 - W_s) [L_task(., upload) + beta2 L_R2].
// W_s and both candidate changes are constants w.r.t. the gradient.
LossEval recalibrated_loss(const HyperParams& hyper, const Array& z, const Array& basic_flat,
                           const Array& upload_flat, const HyperParams& snap,
                           const std::vector<PriorTask>& priors, const TargetArchitecture& arch,
                           const ServerConfig& cfg, bool want_grad = true,
                           std::optional<double> fixed_ws = std::nullopt,
                           const std::vector<Array>* fixed_delta_a = nullptr,
                           const std::vector<Array>* fixed_delta_b = nullptr,
                           const std::map<int, Array>* snap_cache = nullptr);

// Registry-routed form; throws ContractError when the task has no basic
// model yet (callers must use hyper_loss for first uploads).
LossEval recalibrated_loss(const HyperParams& hyper, const TaskIdentity& identity,
                           const BasicModelRegistry& registry, const ParameterSet& upload,
                           const HyperParams& snap, const std::vector<PriorTask>& priors,
                           const TargetArchitecture& arch, const ServerConfig& cfg);

struct UploadReport {
    int task_id = 0;
    int client_id = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    bool recalibrated = false;
    std::optional<double> w_s;
};

struct RoundReport {
    std::vector<UploadReport> uploads;
};

// Processes the round's uploads in ascending (task_id, client_id) order.
// First upload of a task optimizes the plain regularized loss and installs
// the generated weights as that task's basic model; later uploads optimize
// the recalibrated loss and refresh the basic model.
RoundReport server_round(HyperParams& hyper, BasicModelRegistry& registry,
                         const std::vector<Upload>& uploads, const HyperParams& snap,
                         const TaskRegistry& tasks, AdamState& adam,
                         const TargetArchitecture& arch, const ServerConfig& cfg,
                         int round_index, const std::map<int, Array>* snap_cache = nullptr);

}  // namespace feddah
