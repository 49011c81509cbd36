#include "sparsepaint/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "sparsepaint/errors.hpp"

namespace sparsepaint::diffusion {

SparseSystem assemble_system(const Image& img, const BinaryMask& mask, int channel) {
    img.validate();
    mask.validate();
    if (img.height != mask.height || img.width != mask.width) {
        throw dimension_error("image and mask dimensions differ");
    }
    if (channel < 0 || channel >= img.channels) {
        throw dimension_error("channel out of range");
    }

    const int h = img.height, w = img.width;
    SparseSystem sys;
    sys.unknown_of_pixel.assign(static_cast<std::size_t>(h) * w, -1);
    std::int64_t dim = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) sys.unknown_of_pixel[static_cast<std::size_t>(y) * w + x] = dim++;
        }
    }

    sys.row_ptr.reserve(dim + 1);
    sys.row_ptr.push_back(0);
    sys.diag.reserve(dim);
    sys.rhs.reserve(dim);

    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(y, x)) continue;
            double diag = 0.0, rhs = 0.0;
            for (int d = 0; d < 4; ++d) {
                const int ny = y + dy[d], nx = x + dx[d];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue; // reflecting boundary
                diag += 1.0;
                if (mask.at(ny, nx)) {
                    rhs += img.at(ny, nx, channel);
                } else {
                    sys.col_idx.push_back(sys.unknown_of_pixel[static_cast<std::size_t>(ny) * w + nx]);
                    sys.off_diag.push_back(-1.0);
                }
            }
            sys.diag.push_back(diag);
            sys.rhs.push_back(rhs);
            sys.row_ptr.push_back(static_cast<std::int64_t>(sys.col_idx.size()));
        }
    }
    return sys;
}

namespace {

void apply(const SparseSystem& sys, const std::vector<double>& x, std::vector<double>& out) {
    const std::int64_t n = sys.dim();
    for (std::int64_t r = 0; r < n; ++r) {
        double acc = sys.diag[r] * x[r];
        for (std::int64_t j = sys.row_ptr[r]; j < sys.row_ptr[r + 1]; ++j) {
            acc += sys.off_diag[j] * x[sys.col_idx[j]];
        }
        out[r] = acc;
    }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

CgResult cg_solve(const SparseSystem& sys, const CgOptions& opts) {
    const std::int64_t n = sys.dim();
    CgResult res;
    res.solution.assign(n, 0.0);
    if (n == 0) return res;

    const std::int64_t cap = opts.max_iterations > 0 ? opts.max_iterations : 10 * n;
    const double rhs_norm = std::sqrt(dot(sys.rhs, sys.rhs));
    if (rhs_norm == 0.0) return res; // zero rhs: zero solution is exact

    std::vector<double> r = sys.rhs; // residual of the zero initial guess
    std::vector<double> z(n), p(n), ap(n);
    std::vector<double> inv_diag;
    if (opts.jacobi_preconditioner) {
        inv_diag.resize(n);
        for (std::int64_t i = 0; i < n; ++i) inv_diag[i] = 1.0 / sys.diag[i];
    }

    auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (opts.jacobi_preconditioner) {
            for (std::int64_t i = 0; i < n; ++i) out[i] = inv_diag[i] * in[i];
        } else {
            out = in;
        }
    };

    precondition(r, z);
    p = z;
    double rz = dot(r, z);
    double rel = std::sqrt(dot(r, r)) / rhs_norm;
    if (rel <= opts.rel_residual) {
        res.residual = rel;
        return res;
    }

    for (std::int64_t it = 1; it <= cap; ++it) {
        apply(sys, p, ap);
        const double alpha = rz / dot(p, ap);
        for (std::int64_t i = 0; i < n; ++i) {
            res.solution[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = std::sqrt(dot(r, r)) / rhs_norm;
        res.iterations = it;
        res.residual = rel;
        if (rel <= opts.rel_residual) return res;
        precondition(r, z);
        const double rz_next = dot(r, z);
        const double beta = rz_next / rz;
        rz = rz_next;
        for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw convergence_error("conjugate gradients hit the iteration cap", rel);
}

Image inpaint_homogeneous(const Image& img, const BinaryMask& mask, const InpaintOptions& opts) {
    img.validate();
    mask.validate();
    if (img.height != mask.height || img.width != mask.width) {
        throw dimension_error("image and mask dimensions differ");
    }
    if (mask.ones() == 0) {
        throw dimension_error("inpainting needs at least one known pixel");
    }

    Image out = img;
    if (mask.ones() == mask.bits.size()) return out;

    for (int c = 0; c < img.channels; ++c) {
        const SparseSystem sys = assemble_system(img, mask, c);
        CgOptions cg;
        cg.rel_residual = opts.cg_rel_residual;
        cg.jacobi_preconditioner = opts.jacobi_preconditioner;
        const CgResult sol = cg_solve(sys, cg);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const std::int64_t row = sys.unknown_of_pixel[static_cast<std::size_t>(y) * img.width + x];
                if (row >= 0) out.at(y, x, c) = std::clamp(sol.solution[row], 0.0, 1.0);
            }
        }
    }
    return out;
}

} // namespace sparsepaint::diffusion
