#include "metareg/optim.hpp"

#include <cmath>

namespace metareg {

namespace {

void require_matching_schema(const char* op, const ParamSet& params, const ParamSet& grads) {
    if (params.count() != grads.count())
        throw DimensionError(std::string(op) + ": " + std::to_string(grads.count()) +
                             " gradients for " + std::to_string(params.count()) + " parameters");
    const auto& pe = params.entries();
    const auto& ge = grads.entries();
    for (std::size_t i = 0; i < pe.size(); ++i) {
        if (pe[i].name != ge[i].name)
            throw ContractError(std::string(op) + ": entry " + std::to_string(i) + " is '" +
                                pe[i].name + "' in params but '" + ge[i].name + "' in grads");
        if (pe[i].tensor.shape() != ge[i].tensor.shape())
            throw DimensionError(std::string(op) + ": '" + pe[i].name + "' is " +
                                 shape_str(pe[i].tensor.shape()) + " but its gradient is " +
                                 shape_str(ge[i].tensor.shape()));
    }
}

}  // namespace

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
    require_matching_schema("sgd_step", params, grads);
    std::vector<Tensor> updated;
    updated.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i)
        updated.push_back(
            sub(params.entries()[i].tensor, scale(grads.entries()[i].tensor, lr)));
    return params.with_tensors(updated);
}

ParamSet adam_step(AdamState& state, const ParamSet& params, const ParamSet& grads, double lr,
                   double beta1, double beta2, double eps) {
    require_matching_schema("adam_step", params, grads);
    const auto& pe = params.entries();
    if (state.t == 0) {
        state.m.assign(pe.size(), {});
        state.v.assign(pe.size(), {});
        for (std::size_t i = 0; i < pe.size(); ++i) {
            state.m[i].assign(static_cast<std::size_t>(pe[i].tensor.size()), 0.0);
            state.v[i].assign(static_cast<std::size_t>(pe[i].tensor.size()), 0.0);
        }
    } else if (state.m.size() != pe.size()) {
        throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) +
                             " entries but params has " + std::to_string(pe.size()));
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

    std::vector<Tensor> updated;
    updated.reserve(pe.size());
    for (std::size_t i = 0; i < pe.size(); ++i) {
        auto pv = pe[i].tensor.values();
        auto gv = grads.entries()[i].tensor.values();
        if (state.m[i].size() != pv.size())
            throw DimensionError("adam_step: state slot for '" + pe[i].name +
                                 "' holds " + std::to_string(state.m[i].size()) +
                                 " moments for " + std::to_string(pv.size()) + " values");
        std::vector<double> out(pv.size());
        for (std::size_t j = 0; j < pv.size(); ++j) {
            const double g = gv[j];
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in '" + pe[i].name + "'");
            double& m = state.m[i][j];
            double& v = state.v[i][j];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            out[j] = pv[j] - update;
            if (!std::isfinite(out[j]))
                throw NumericError("adam_step: non-finite value in '" + pe[i].name + "'");
        }
        updated.push_back(Tensor::from_values(pe[i].tensor.shape(), std::move(out), true));
    }
    return params.with_tensors(updated);
}

}  // namespace metareg
