#include "metareg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace metareg {

double gradient_rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

double finite_difference_check(const std::function<Tensor(const ParamSet&)>& f,
                               const ParamSet& params, double step) {
    if (step <= 0.0) throw ContractError("finite_difference_check: step must be positive");

    ParamSet leaves = params.detached(true);
    Tensor loss = f(leaves);
    if (loss.size() != 1)
        throw ContractError("finite_difference_check: f must return a scalar, got " +
                            shape_str(loss.shape()));
    std::vector<double> analytic = grad_params(loss, leaves).flatten();

    // Perturbed evaluations keep taping on: f may differentiate internally
    // (e.g. a meta-loss that adapts through an inner gradient step).
    std::vector<double> flat = params.flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double saved = flat[i];
        flat[i] = saved + step;
        const double plus = f(params.unflattened(flat, true)).value();
        flat[i] = saved - step;
        const double minus = f(params.unflattened(flat, true)).value();
        flat[i] = saved;
        const double numeric = (plus - minus) / (2.0 * step);
        worst = std::max(worst, gradient_rel_error(analytic[i], numeric));
    }
    return worst;
}

}  // namespace metareg
