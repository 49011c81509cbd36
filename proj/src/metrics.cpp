#include "sparsepaint/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace sparsepaint {

namespace {

void require_same_shape(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw dimension_error("metric inputs must have identical dimensions");
    }
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
    std::vector<double> w(kSsimWindow);
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        w[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace

double mae(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return 255.0 * sum / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sq += d * d;
    }
    if (sq == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = 255.0 * 255.0 * sq / static_cast<double>(a.data.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b);
    if (a.height < kSsimWindow || a.width < kSsimWindow) {
        throw dimension_error("ssim needs images at least 11x11");
    }

    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const std::vector<double> win = gaussian_window();
    const int h = a.height, w = a.width, k = a.channels;
    const int oh = h - kSsimWindow + 1;
    const int ow = w - kSsimWindow + 1;

    // Separable filtering of the five moment planes, one channel at a time.
    std::vector<double> pa(static_cast<std::size_t>(h) * w), pb(pa.size());
    std::vector<double> row_a(static_cast<std::size_t>(h) * ow), row_b(row_a.size());
    std::vector<double> row_aa(row_a.size()), row_bb(row_a.size()), row_ab(row_a.size());

    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                pa[static_cast<std::size_t>(y) * w + x] = 255.0 * a.at(y, x, c);
                pb[static_cast<std::size_t>(y) * w + x] = 255.0 * b.at(y, x, c);
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < kSsimWindow; ++i) {
                    const double va = pa[static_cast<std::size_t>(y) * w + x + i];
                    const double vb = pb[static_cast<std::size_t>(y) * w + x + i];
                    sa += win[i] * va;
                    sb += win[i] * vb;
                    saa += win[i] * va * va;
                    sbb += win[i] * vb * vb;
                    sab += win[i] * va * vb;
                }
                const std::size_t o = static_cast<std::size_t>(y) * ow + x;
                row_a[o] = sa;
                row_b[o] = sb;
                row_aa[o] = saa;
                row_bb[o] = sbb;
                row_ab[o] = sab;
            }
        }
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double mu_a = 0, mu_b = 0, m_aa = 0, m_bb = 0, m_ab = 0;
                for (int i = 0; i < kSsimWindow; ++i) {
                    const std::size_t o = static_cast<std::size_t>(y + i) * ow + x;
                    mu_a += win[i] * row_a[o];
                    mu_b += win[i] * row_b[o];
                    m_aa += win[i] * row_aa[o];
                    m_bb += win[i] * row_bb[o];
                    m_ab += win[i] * row_ab[o];
                }
                const double var_a = m_aa - mu_a * mu_a;
                const double var_b = m_bb - mu_b * mu_b;
                const double cov = m_ab - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                total += num / den;
            }
        }
    }
    return total / (static_cast<double>(oh) * ow * k);
}

} // namespace sparsepaint
