#pragma once

#include "sparsepaint/image.hpp"

namespace sparsepaint {

// All three metrics are reported on the 0..255 scale even though images are
// stored in [0,1], so values line up with the usual 8-bit conventions.

// Mean absolute error: (255/N) * sum |a_i - b_i| over all N = h*w*k values.
double mae(const Image& a, const Image& b);

// 10*log10(255^2 / MSE). Identical inputs yield +infinity (sentinel, no throw).
double psnr(const Image& a, const Image& b);

// Mean structural similarity with the 11x11 sigma=1.5 Gaussian window,
// C1=(0.01*255)^2, C2=(0.03*255)^2, computed per channel and averaged over
// channels and window positions. Requires min(h,w) >= 11.
double ssim(const Image& a, const Image& b);

} // namespace sparsepaint
