#include "feddah/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace feddah {

namespace {

double eval(const LossBuilder& build, const std::vector<Array>& params) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const Array& p : params) ids.push_back(tape.leaf(p));
    NodeId loss = build(tape, ids);
    return tape.value(loss).data[0];
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::vector<Array> params, double h) {
    if (h <= 0.0) throw ContractError("grad_check: h must be positive");
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const Array& p : params) ids.push_back(tape.leaf(p));
    NodeId loss = build(tape, ids);
    tape.backward(loss);
    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (NodeId id : ids) analytic.push_back(tape.grad(id));

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t j = 0; j < params[pi].size(); ++j) {
            double orig = params[pi].data[j];
            params[pi].data[j] = orig + h;
            double fp = eval(build, params);
            params[pi].data[j] = orig - h;
            double fm = eval(build, params);
            params[pi].data[j] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[pi].data[j];
            double abs_err = std::fabs(a - numeric);
            double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-4});
            report.max_abs_error = std::max(report.max_abs_error, abs_err);
            report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
        }
    }
    return report;
}

}  // namespace feddah
