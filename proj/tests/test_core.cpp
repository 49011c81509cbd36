#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <vector>

#include "sparsepaint/errors.hpp"
#include "sparsepaint/image.hpp"
#include "sparsepaint/metrics.hpp"
#include "sparsepaint/parallel.hpp"
#include "sparsepaint/rng.hpp"
#include "support/tmpdir.hpp"

using namespace sparsepaint;

namespace {

Image random_image(int h, int w, int k, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w, k);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

// Quantise to the byte grid so save/load round-trips exactly.
Image byte_aligned(Image img) {
    for (double& v : img.data) v = std::floor(v * 255.0 + 0.5) / 255.0;
    return img;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("pgm round trip is byte exact") {
    TempDir tmp("pgm");
    const Image img = byte_aligned(random_image(9, 13, 1, 1));
    save_image(img, tmp.str("a.pgm"));
    const Image back = load_image(tmp.str("a.pgm"));
    REQUIRE(back.height == 9);
    REQUIRE(back.width == 13);
    REQUIRE(back.channels == 1);
    CHECK(back.data == img.data);
}

TEST_CASE("ppm round trip is byte exact") {
    TempDir tmp("ppm");
    const Image img = byte_aligned(random_image(6, 5, 3, 2));
    save_image(img, tmp.str("a.ppm"));
    const Image back = load_image(tmp.str("a.ppm"));
    REQUIRE(back.channels == 3);
    CHECK(back.data == img.data);
}

TEST_CASE("image loader rejects malformed files") {
    TempDir tmp("badimg");
    write_file(tmp.str("bad_magic.pgm"), "P4\n2 2\n255\n0000");
    CHECK_THROWS_AS(load_image(tmp.str("bad_magic.pgm")), format_error);
    write_file(tmp.str("truncated.pgm"), "P5\n4 4\n255\nab");
    CHECK_THROWS_AS(load_image(tmp.str("truncated.pgm")), format_error);
    write_file(tmp.str("maxval.pgm"), "P5\n1 1\n65535\na");
    CHECK_THROWS_AS(load_image(tmp.str("maxval.pgm")), format_error);
    CHECK_THROWS_AS(load_image(tmp.str("missing.pgm")), format_error);
}

TEST_CASE("mask files round trip and reject grey values") {
    TempDir tmp("mask");
    BinaryMask mask(4, 6);
    Rng rng(3);
    for (auto& b : mask.bits) b = rng.uniform() < 0.3 ? 1 : 0;
    save_mask(mask, tmp.str("m.pgm"));
    const BinaryMask back = load_mask(tmp.str("m.pgm"));
    CHECK(back.bits == mask.bits);

    write_file(tmp.str("grey.pgm"), std::string("P5\n2 1\n255\n") + '\x80' + '\x00');
    CHECK_THROWS_AS(load_mask(tmp.str("grey.pgm")), format_error);
}

TEST_CASE("center crop anchors at the centered window") {
    Image img(4, 5, 1);
    std::iota(img.data.begin(), img.data.end(), 0.0);
    for (double& v : img.data) v /= 20.0;
    const Image c = center_crop(img, 2);
    REQUIRE(c.height == 2);
    REQUIRE(c.width == 2);
    // window top-left at (floor((4-2)/2), floor((5-2)/2)) = (1, 1)
    CHECK(c.at(0, 0, 0) == img.at(1, 1, 0));
    CHECK(c.at(1, 1, 0) == img.at(2, 2, 0));
    CHECK_THROWS_AS(center_crop(img, 6), dimension_error);
}

TEST_CASE("seed derivation separates streams") {
    CHECK(derive_seed(1, 0) == derive_seed(1, 0));
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("rng uniform stays in range and is seed deterministic") {
    Rng a(7), b(7);
    for (int i = 0; i < 1000; ++i) {
        const double v = a.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        CHECK(v == b.uniform());
    }
    Rng c(8);
    std::vector<int> buckets(4, 0);
    for (int i = 0; i < 4000; ++i) ++buckets[c.uniform_int(4)];
    for (int count : buckets) {
        CHECK(count > 800);
        CHECK(count < 1200);
    }
}

TEST_CASE("parallel_for covers the range once regardless of workers") {
    const int n = 1003;
    for (int cap : {1, 3, 8}) {
        set_thread_cap(cap);
        std::vector<int> hits(n, 0);
        parallel_for(n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) hits[static_cast<std::size_t>(i)] += 1;
        });
        CHECK(std::accumulate(hits.begin(), hits.end(), 0) == n);
        CHECK(*std::min_element(hits.begin(), hits.end()) == 1);
    }
    set_thread_cap(0); // back to the environment default
}

TEST_CASE("mae matches a direct loop and scales to 255") {
    const Image a = random_image(8, 7, 3, 10);
    const Image b = random_image(8, 7, 3, 11);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    const double expect = 255.0 * sum / static_cast<double>(a.data.size());
    CHECK(mae(a, b) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(mae(a, a) == 0.0);
    CHECK_THROWS_AS(mae(a, random_image(7, 7, 3, 12)), dimension_error);
}

TEST_CASE("psnr matches the definition and reports infinity when equal") {
    const Image a = random_image(9, 9, 1, 13);
    const Image b = random_image(9, 9, 1, 14);
    double sq = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = 255.0 * (a.data[i] - b.data[i]);
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.data.size());
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / mse)).epsilon(1e-12));
    CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
}

namespace {

// Windowed SSIM recomputed directly: explicit 11x11 Gaussian weights per
// window, no separable filtering, averaged over valid windows and channels.
double ssim_reference(const Image& a, const Image& b) {
    constexpr int R = 5;
    double w[11][11];
    double wsum = 0.0;
    for (int dy = -R; dy <= R; ++dy) {
        for (int dx = -R; dx <= R; ++dx) {
            w[dy + R][dx + R] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += w[dy + R][dx + R];
        }
    }
    for (auto& row : w) {
        for (double& v : row) v /= wsum;
    }
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    double total = 0.0;
    std::int64_t windows = 0;
    for (int c = 0; c < a.channels; ++c) {
        for (int cy = R; cy < a.height - R; ++cy) {
            for (int cx = R; cx < a.width - R; ++cx) {
                double ma = 0, mb = 0;
                for (int dy = -R; dy <= R; ++dy) {
                    for (int dx = -R; dx <= R; ++dx) {
                        ma += w[dy + R][dx + R] * 255.0 * a.at(cy + dy, cx + dx, c);
                        mb += w[dy + R][dx + R] * 255.0 * b.at(cy + dy, cx + dx, c);
                    }
                }
                double va = 0, vb = 0, cov = 0;
                for (int dy = -R; dy <= R; ++dy) {
                    for (int dx = -R; dx <= R; ++dx) {
                        const double da = 255.0 * a.at(cy + dy, cx + dx, c) - ma;
                        const double db = 255.0 * b.at(cy + dy, cx + dx, c) - mb;
                        va += w[dy + R][dx + R] * da * da;
                        vb += w[dy + R][dx + R] * db * db;
                        cov += w[dy + R][dx + R] * da * db;
                    }
                }
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

} // namespace

TEST_CASE("ssim matches the direct windowed computation") {
    const Image a = random_image(14, 13, 1, 20);
    const Image b = random_image(14, 13, 1, 21);
    CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-10));

    const Image c3 = random_image(12, 11, 3, 22);
    const Image d3 = random_image(12, 11, 3, 23);
    CHECK(ssim(c3, d3) == doctest::Approx(ssim_reference(c3, d3)).epsilon(1e-10));

    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(ssim(random_image(10, 14, 1, 24), random_image(10, 14, 1, 25)),
                    dimension_error);
}
