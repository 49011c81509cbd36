#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsepaint/errors.hpp"

namespace sparsepaint {

// Raster image with values in [0, 1], row-major, channel-interleaved.
// height x width x channels; channels is 1 (grey) or 3 (RGB).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int k, double fill = 0.0);
    Image(int h, int w, int k, std::vector<double> values);

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t value_count() const { return pixel_count() * channels; }

    // Throws domain_error / dimension_error if the invariants are violated.
    void validate() const;
};

// Per-pixel known-data indicator, one plane shared across all colour channels.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits; // exactly 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w, std::uint8_t fill = 0);

    std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t ones() const;
    double density() const;

    void validate() const;
};

// Relaxed mask precursor with values in [0, 1].
struct ConfidenceMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    ConfidenceMap() = default;
    ConfidenceMap(int h, int w, double fill = 0.0);

    void validate() const;
};

// Reads a binary PGM (P5, grey) or PPM (P6, RGB) file with maxval 255.
// Bytes map to values as v = byte / 255.
Image load_image(const std::string& path);

// Writes P5 (1 channel) or P6 (3 channels), maxval 255, byte = floor(v*255 + 0.5).
void save_image(const Image& img, const std::string& path);

// Masks travel as P5 files with values {0, 255}.
void save_mask(const BinaryMask& mask, const std::string& path);
BinaryMask load_mask(const std::string& path);

// size x size window anchored at (floor((h-size)/2), floor((w-size)/2)).
Image center_crop(const Image& img, int size);

} // namespace sparsepaint
