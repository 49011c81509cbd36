#include "sparsepaint/optim.hpp"

#include <cmath>

#include "sparsepaint/errors.hpp"

namespace sparsepaint::ad {

void adam_step(const std::vector<Node*>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].reset(params[i]->value.shape);
            state.v[i].reset(params[i]->value.shape);
        }
    }
    if (state.m.size() != params.size()) throw dimension_error("adam state does not match parameter count");

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Node* p = params[i];
        if (!p->grad_ready) throw domain_error("adam step without a fresh gradient");
        if (!(p->grad.shape == p->value.shape) || !(state.m[i].shape == p->value.shape)) {
            throw dimension_error("adam shape mismatch");
        }
        for (std::size_t j = 0; j < p->value.data.size(); ++j) {
            const double g = p->grad.data[j];
            double& m = state.m[i].data[j];
            double& v = state.v[i].data[j];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mh = m / bc1;
            const double vh = v / bc2;
            p->value.data[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        }
    }
}

int weight_normalize(const std::vector<FilterRef>& filters) {
    int zero_filters = 0;
    for (const FilterRef& f : filters) {
        const Shape ws = f.weight->shape;
        const std::int64_t per = ws.count() / ws.n;
        double* wp = &f.weight->data[static_cast<std::size_t>(f.channel) * per];
        double sq = 0.0;
        for (std::int64_t i = 0; i < per; ++i) sq += wp[i] * wp[i];
        if (f.bias) sq += f.bias->data[f.bias_index] * f.bias->data[f.bias_index];
        if (sq == 0.0) {
            ++zero_filters;
            continue;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (std::int64_t i = 0; i < per; ++i) wp[i] *= inv;
        if (f.bias) f.bias->data[f.bias_index] *= inv;
    }
    return zero_filters;
}

} // namespace sparsepaint::ad
