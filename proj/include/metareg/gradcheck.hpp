#pragma once

// Central finite-difference verification of taped gradients.

#include <functional>

#include "metareg/param_set.hpp"

namespace metareg {

// Relative-error convention shared by every gradient check:
// |analytic - numeric| / max(1, |analytic|, |numeric|).
double gradient_rel_error(double analytic, double numeric);

// f maps a ParamSet (same schema as params) to a scalar loss tensor.
// Returns the max over all coordinates of the relative error between the
// taped gradient and a central difference with the given step.
double finite_difference_check(const std::function<Tensor(const ParamSet&)>& f,
                               const ParamSet& params, double step = 1e-5);

struct GradcheckItem {
    std::string name;
    double max_rel_error = 0.0;
    double threshold = 0.0;

    bool ok() const { return max_rel_error < threshold; }
};

// Deterministic battery: every differentiable primitive against central
// differences, then the full regularized MANN loss and the second-order
// MAML meta-loss on tiny pinned-seed models.  Inputs keep relu/abs/clamp
// kinks outside the finite-difference window.
std::vector<GradcheckItem> gradcheck_report();

}  // namespace metareg
