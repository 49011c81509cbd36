#pragma once

#include <cstdint>
#include <functional>

#include "sparsepaint/image.hpp"
#include "sparsepaint/rng.hpp"

namespace sparsepaint::classic_opt {

/// Any reconstruction backend: image + mask in, full image out.
using InpaintOperator = std::function<Image(const Image&, const BinaryMask&)>;

struct SparsifyConfig {
    double density = 0.1;        // target |mask| / (h*w)
    double p = 0.1;              // trial fraction removed per round
    double q = 0.05;             // fraction of the trial set re-added
    std::uint64_t seed = 0;
};

struct SparsifyStats {
    std::int64_t rounds = 0;
    std::int64_t inpaint_calls = 0;
};

/// Probabilistic sparsification: start from the full mask and shed pixels
/// round by round, keeping the ones the operator reconstructs worst, until
/// exactly round(density * h * w) remain.
BinaryMask probabilistic_sparsification(const Image& img, const InpaintOperator& op,
                                        const SparsifyConfig& cfg,
                                        SparsifyStats* stats = nullptr);

struct NlpeConfig {
    int cycles = 5;              // iterations = cycles * |mask|
    int candidates_per_swap = 10;
    std::uint64_t seed = 0;
};

struct NlpeStats {
    std::int64_t iterations = 0;
    std::int64_t accepted = 0;
    /// Reconstruction error after each committed swap (strictly decreasing).
    std::vector<double> mae_trace;
};

/// Non-local pixel exchange: repeatedly offer one mask pixel a set of random
/// new homes and move it only when the relocation strictly lowers the
/// reconstruction error. Mask cardinality is preserved.
BinaryMask nlpe(const Image& img, BinaryMask mask, const InpaintOperator& op,
                const NlpeConfig& cfg, NlpeStats* stats = nullptr);

} // namespace sparsepaint::classic_opt
