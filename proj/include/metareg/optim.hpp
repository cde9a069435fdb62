#pragma once

// Optimizers.  sgd_step stays on the tape (the inner loop differentiates
// through it); adam_step is plain arithmetic on leaf values.

#include <cstdint>
#include <vector>

#include "metareg/param_set.hpp"

namespace metareg {

// params - lr * grads, schema preserved.  When inputs are taped the result
// is differentiable w.r.t. both.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);

struct AdamState {
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;  // one slot per parameter entry
};

// Standard Adam with bias correction; returns fresh (untaped) leaves and
// advances state in place.  Non-finite gradients or updates raise a
// numeric error rather than entering the parameters.
ParamSet adam_step(AdamState& state, const ParamSet& params, const ParamSet& grads, double lr,
                   double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace metareg
