#pragma once

#include <functional>
#include <vector>

#include "feddah/tape.hpp"

namespace feddah {

// Builds a scalar loss from leaf nodes for the given parameter arrays.
using LossBuilder = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

// Compares reverse-mode gradients against central finite differences,
// coordinate by coordinate. Relative error uses a small floor so that
// near-zero gradients are judged on absolute terms.
GradCheckReport grad_check(const LossBuilder& build, std::vector<Array> params, double h);

}  // namespace feddah
