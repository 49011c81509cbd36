#pragma once

#include <cstdint>
#include <vector>

#include "sparsepaint/errors.hpp"

namespace sparsepaint::ad {

struct Shape {
    int n = 0; // batch
    int c = 0; // channels
    int h = 0;
    int w = 0;

    std::int64_t count() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
};

// Dense double-precision value with a fixed rank-4 shape. Gradients are
// stored as separate Tensors of the same shape by the graph.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), data(static_cast<std::size_t>(s.count()), 0.0) {}

    double& at(int n, int c, int y, int x) {
        return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }
    const double& at(int n, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }

    // Reshape-and-zero; reuses the allocation when the size already matches.
    void reset(Shape s) {
        shape = s;
        data.assign(static_cast<std::size_t>(s.count()), 0.0);
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

} // namespace sparsepaint::ad
