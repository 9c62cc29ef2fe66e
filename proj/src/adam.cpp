#include "feddah/adam.hpp"

#include <cmath>

namespace feddah {

void AdamState::ensure_initialized(const std::vector<Array>& params) {
    if (!first_moment.empty()) {
        if (first_moment.size() != params.size()) {
            throw DimensionError("adam: moment count does not match parameter count");
        }
        for (size_t i = 0; i < params.size(); ++i) {
            if (!first_moment[i].same_shape(params[i])) {
                throw DimensionError("adam: moment shape does not match parameter shape");
            }
        }
        return;
    }
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const Array& p : params) {
        first_moment.push_back(Array::zeros_like(p));
        second_moment.push_back(Array::zeros_like(p));
    }
}

void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, AdamState& state) {
    if (grads.size() != params.size()) {
        throw DimensionError("adam_step: gradient count does not match parameter count");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].same_shape(params[i])) {
            throw DimensionError("adam_step: gradient shape does not match parameter shape");
        }
    }
    state.ensure_initialized(params);
    state.step_count += 1;
    const AdamConfig& c = state.hyper;
    state.beta1_pow *= c.beta1;
    state.beta2_pow *= c.beta2;
    double bc1 = 1.0 - state.beta1_pow;
    double bc2 = 1.0 - state.beta2_pow;
    for (size_t i = 0; i < params.size(); ++i) {
        Array& p = params[i];
        const Array& g = grads[i];
        Array& m = state.first_moment[i];
        Array& v = state.second_moment[i];
        for (size_t j = 0; j < p.size(); ++j) {
            m.data[j] = c.beta1 * m.data[j] + (1.0 - c.beta1) * g.data[j];
            v.data[j] = c.beta2 * v.data[j] + (1.0 - c.beta2) * g.data[j] * g.data[j];
            double mhat = m.data[j] / bc1;
            double vhat = v.data[j] / bc2;
            p.data[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

std::vector<Array> adam_lookahead(const std::vector<Array>& grads, const AdamConfig& cfg) {
    std::vector<Array> delta;
    delta.reserve(grads.size());
    for (const Array& g : grads) {
        Array d(g.shape);
        for (size_t j = 0; j < g.size(); ++j) {
            // One bias-corrected step from zero moments: mhat = g, vhat = g^2.
            d.data[j] = -cfg.lr * g.data[j] / (std::sqrt(g.data[j] * g.data[j]) + cfg.eps);
        }
        delta.push_back(std::move(d));
    }
    return delta;
}

}  // namespace feddah
