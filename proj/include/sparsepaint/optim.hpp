#pragma once

#include <cstdint>
#include <vector>

#include "sparsepaint/graph.hpp"
#include "sparsepaint/tensor.hpp"

namespace sparsepaint::ad {

struct AdamConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers for one parameter set, plus the shared step
// counter. Zero-initialised on first use.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;
};

// One bias-corrected Adam update, in place. Parameters without a fresh
// gradient (grad_ready unset) are a domain error: stepping on stale
// gradients is always a bug.
void adam_step(const std::vector<Node*>& params, AdamState& state, const AdamConfig& cfg = {});

// A filter for norm purposes: one output channel's weight slice plus,
// optionally, its bias entry.
struct FilterRef {
    Tensor* weight;     // conv (out,in,5,5): slice [channel]; linear likewise
    int channel;
    Tensor* bias;       // may be null
    int bias_index = 0;
};

// Rescales each filter to unit 2-norm (bias included when present).
// Zero-norm filters are left untouched; the return value counts them.
int weight_normalize(const std::vector<FilterRef>& filters);

} // namespace sparsepaint::ad
