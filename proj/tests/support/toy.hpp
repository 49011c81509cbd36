#pragma once

// Synthetic training corpus: smooth random gradients with a few constant
// rectangles dropped on top. Cheap to generate, non-trivial to inpaint.

#include <algorithm>
#include <vector>

#include "sparsepaint/image.hpp"
#include "sparsepaint/rng.hpp"

namespace toy {

inline sparsepaint::Image toy_image(int size, sparsepaint::Rng& rng) {
    sparsepaint::Image img(size, size, 1);
    const double gx = rng.uniform(-1.0, 1.0);
    const double gy = rng.uniform(-1.0, 1.0);
    const double base = rng.uniform(0.2, 0.8);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double v = base + gx * (x / (size - 1.0) - 0.5) + gy * (y / (size - 1.0) - 0.5);
            img.at(y, x, 0) = std::clamp(v, 0.0, 1.0);
        }
    }
    const int rects = 1 + static_cast<int>(rng.uniform_int(3));
    for (int r = 0; r < rects; ++r) {
        const int w = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size / 2)));
        const int h = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size / 2)));
        const int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - 1)));
        const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - 1)));
        const double fill = rng.uniform();
        for (int y = y0; y < std::min(size, y0 + h); ++y) {
            for (int x = x0; x < std::min(size, x0 + w); ++x) {
                img.at(y, x, 0) = fill;
            }
        }
    }
    return img;
}

inline std::vector<sparsepaint::Image> toy_corpus(int count, int size, std::uint64_t seed) {
    sparsepaint::Rng rng(seed);
    std::vector<sparsepaint::Image> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(toy_image(size, rng));
    return out;
}

} // namespace toy
