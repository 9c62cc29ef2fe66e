#pragma once

#include <cstdint>
#include <vector>

#include "feddah/array.hpp"

namespace feddah {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction over a list of parameter arrays.
struct AdamState {
    AdamConfig hyper;
    int64_t step_count = 0;
    // Running beta powers; multiplying per step keeps the update free of
    // libm pow() and therefore bit-reproducible.
    double beta1_pow = 1.0;
    double beta2_pow = 1.0;
    std::vector<Array> first_moment;
    std::vector<Array> second_moment;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : hyper(cfg) {}

    void ensure_initialized(const std::vector<Array>& params);
};

// In-place update; moments are initialized on first use.
void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, AdamState& state);

// Displacement of a single Adam step taken from a fresh state (zero moments,
// step 1). Returns delta, does not modify anything.
std::vector<Array> adam_lookahead(const std::vector<Array>& grads, const AdamConfig& cfg);

}  // namespace feddah
