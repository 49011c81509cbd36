#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sparsepaint/image.hpp"

namespace sparsepaint::diffusion {

/// Linear system for the unknown pixels of one channel, in compressed
/// sparse row form. Rows correspond to non-mask pixels in scan order;
/// known neighbours have been folded into the right-hand side.
struct SparseSystem {
    std::vector<std::int64_t> row_ptr;   // size dim()+1
    std::vector<std::int64_t> col_idx;   // off-diagonal column indices
    std::vector<double> off_diag;        // matching coefficients (all -1 here)
    std::vector<double> diag;            // per-row diagonal
    std::vector<double> rhs;
    std::vector<std::int64_t> unknown_of_pixel; // pixel index -> row, or -1

    std::int64_t dim() const { return static_cast<std::int64_t>(diag.size()); }
};

/// Build the homogeneous-diffusion system for `channel` of `img` with
/// Dirichlet data at mask pixels and reflecting image boundaries: each
/// unknown's diagonal equals its count of in-grid neighbours.
SparseSystem assemble_system(const Image& img, const BinaryMask& mask, int channel);

struct CgOptions {
    double rel_residual = 1e-6;
    /// Iteration cap; 0 means 10 * dim().
    std::int64_t max_iterations = 0;
    bool jacobi_preconditioner = false;
};

struct CgResult {
    std::vector<double> solution;
    std::int64_t iterations = 0;
    double residual = 0.0; // final relative residual
};

/// Conjugate gradients on the SPD system. Throws convergence_error (with the
/// final relative residual attached) if the cap is hit first. A zero-dim
/// system returns an empty solution in zero iterations.
CgResult cg_solve(const SparseSystem& sys, const CgOptions& opts = {});

struct InpaintOptions {
    double cg_rel_residual = 1e-6;
    bool jacobi_preconditioner = false;
};

/// Reconstruct `img` from its values at mask pixels: known pixels are copied
/// bit-exactly, unknown pixels solve the Laplace equation per channel, and
/// the solved values are clamped to [0,1]. An all-ones mask returns the
/// input unchanged; an all-zeros mask is a dimension_error.
Image inpaint_homogeneous(const Image& img, const BinaryMask& mask,
                          const InpaintOptions& opts = {});

} // namespace sparsepaint::diffusion
