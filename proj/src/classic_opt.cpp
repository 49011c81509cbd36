#include "sparsepaint/classic_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "sparsepaint/errors.hpp"
#include "sparsepaint/metrics.hpp"

namespace sparsepaint::classic_opt {

namespace {

// Mean absolute difference across channels at one pixel.
double pixel_error(const Image& a, const Image& b, std::int64_t pixel) {
    const int y = static_cast<int>(pixel / a.width);
    const int x = static_cast<int>(pixel % a.width);
    double sum = 0.0;
    for (int c = 0; c < a.channels; ++c) sum += std::abs(a.at(y, x, c) - b.at(y, x, c));
    return sum / a.channels;
}

// First k entries of `pool` become a uniform sample without replacement.
void partial_shuffle(std::vector<std::int64_t>& pool, std::int64_t k, Rng& rng) {
    const std::int64_t n = static_cast<std::int64_t>(pool.size());
    for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t j = i + rng.uniform_int(n - i);
        std::swap(pool[i], pool[j]);
    }
}

std::vector<std::int64_t> pixels_where(const BinaryMask& mask, bool value) {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        if ((mask.bits[i] != 0) == value) out.push_back(static_cast<std::int64_t>(i));
    }
    return out;
}

} // namespace

BinaryMask probabilistic_sparsification(const Image& img, const InpaintOperator& op,
                                        const SparsifyConfig& cfg, SparsifyStats* stats) {
    img.validate();
    if (!(cfg.density > 0.0 && cfg.density <= 1.0)) throw domain_error("density must be in (0,1]");
    if (!(cfg.q > 0.0 && cfg.q <= cfg.p && cfg.p <= 1.0)) {
        throw domain_error("fractions must satisfy 0 < q <= p <= 1");
    }

    const std::int64_t total = static_cast<std::int64_t>(img.height) * img.width;
    const std::int64_t target = std::llround(cfg.density * static_cast<double>(total));
    if (target < 1) throw domain_error("density leaves no mask pixels");

    BinaryMask mask(img.height, img.width, 1);

    Rng rng(cfg.seed);
    std::int64_t count = total;
    std::int64_t round = 0;
    while (count > target) {
        ++round;
        const std::int64_t trial = std::min<std::int64_t>(
            static_cast<std::int64_t>(std::ceil(cfg.p * static_cast<double>(count))), count);
        std::int64_t readd =
            static_cast<std::int64_t>(std::ceil((cfg.p - cfg.q) * static_cast<double>(count)));
        // Guarantee progress, and trim the last round to land on the target.
        std::int64_t net = std::max<std::int64_t>(trial - readd, 1);
        net = std::min(net, count - target);
        readd = trial - net;

        std::vector<std::int64_t> masked = pixels_where(mask, true);
        partial_shuffle(masked, trial, rng);
        for (std::int64_t i = 0; i < trial; ++i) mask.bits[masked[i]] = 0;

        Image rec;
        try {
            rec = op(img, mask);
        } catch (const std::exception& e) {
            throw std::runtime_error("inpainting failed in sparsification round " +
                                     std::to_string(round) + ": " + e.what());
        }

        std::vector<std::int64_t> order(masked.begin(), masked.begin() + trial);
        std::vector<double> err(trial);
        for (std::int64_t i = 0; i < trial; ++i) err[i] = pixel_error(img, rec, order[i]);
        std::vector<std::int64_t> rank(trial);
        for (std::int64_t i = 0; i < trial; ++i) rank[i] = i;
        std::sort(rank.begin(), rank.end(), [&](std::int64_t a, std::int64_t b) {
            if (err[a] != err[b]) return err[a] > err[b];
            return order[a] < order[b];
        });
        for (std::int64_t i = 0; i < readd; ++i) mask.bits[order[rank[i]]] = 1;

        count -= net;
        if (stats) {
            stats->rounds = round;
            ++stats->inpaint_calls;
        }
    }
    return mask;
}

BinaryMask nlpe(const Image& img, BinaryMask mask, const InpaintOperator& op,
                const NlpeConfig& cfg, NlpeStats* stats) {
    img.validate();
    mask.validate();
    if (img.height != mask.height || img.width != mask.width) {
        throw dimension_error("image and mask dimensions differ");
    }
    if (cfg.cycles < 1 || cfg.candidates_per_swap < 1) {
        throw domain_error("cycles and candidates_per_swap must be at least 1");
    }
    const std::int64_t total = static_cast<std::int64_t>(mask.bits.size());
    const std::int64_t cardinality = static_cast<std::int64_t>(mask.ones());
    if (cardinality == 0 || cardinality == total) {
        throw domain_error("nlpe needs a mask that is neither empty nor full");
    }

    Rng rng(cfg.seed);
    double current = mae(img, op(img, mask));
    const std::int64_t iterations = static_cast<std::int64_t>(cfg.cycles) * cardinality;

    for (std::int64_t it = 0; it < iterations; ++it) {
        std::vector<std::int64_t> masked = pixels_where(mask, true);
        std::vector<std::int64_t> open = pixels_where(mask, false);
        const std::int64_t pick = masked[rng.uniform_int(cardinality)];
        const std::int64_t cands = std::min<std::int64_t>(cfg.candidates_per_swap,
                                                          static_cast<std::int64_t>(open.size()));
        partial_shuffle(open, cands, rng);

        mask.bits[pick] = 0;
        double best_err = std::numeric_limits<double>::infinity();
        std::int64_t best_cand = -1;
        for (std::int64_t i = 0; i < cands; ++i) {
            const std::int64_t cand = open[i];
            mask.bits[cand] = 1;
            const double err = mae(img, op(img, mask));
            mask.bits[cand] = 0;
            if (err < best_err || (err == best_err && cand < best_cand)) {
                best_err = err;
                best_cand = cand;
            }
        }

        if (best_err < current) {
            mask.bits[best_cand] = 1;
            current = best_err;
            if (stats) {
                ++stats->accepted;
                stats->mae_trace.push_back(current);
            }
        } else {
            mask.bits[pick] = 1;
        }
        if (stats) stats->iterations = it + 1;
    }
    return mask;
}

} // namespace sparsepaint::classic_opt
