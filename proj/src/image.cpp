#include "sparsepaint/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace sparsepaint {

Image::Image(int h, int w, int k, double fill)
    : height(h), width(w), channels(k), data(static_cast<std::size_t>(h) * w * k, fill) {
    validate();
}

Image::Image(int h, int w, int k, std::vector<double> values)
    : height(h), width(w), channels(k), data(std::move(values)) {
    validate();
}

void Image::validate() const {
    if (height <= 0 || width <= 0) throw dimension_error("image dimensions must be positive");
    if (channels != 1 && channels != 3) throw dimension_error("image must have 1 or 3 channels");
    if (data.size() != value_count()) throw dimension_error("image data length does not match dimensions");
    for (double v : data) {
        if (!(v >= 0.0 && v <= 1.0)) throw domain_error("image value outside [0,1]");
    }
}

BinaryMask::BinaryMask(int h, int w, std::uint8_t fill)
    : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {
    validate();
}

std::size_t BinaryMask::ones() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits) n += b;
    return n;
}

double BinaryMask::density() const {
    return static_cast<double>(ones()) / static_cast<double>(pixel_count());
}

void BinaryMask::validate() const {
    if (height <= 0 || width <= 0) throw dimension_error("mask dimensions must be positive");
    if (bits.size() != pixel_count()) throw dimension_error("mask bit count does not match dimensions");
    for (std::uint8_t b : bits) {
        if (b != 0 && b != 1) throw domain_error("mask entry is not 0 or 1");
    }
}

ConfidenceMap::ConfidenceMap(int h, int w, double fill)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
    validate();
}

void ConfidenceMap::validate() const {
    if (height <= 0 || width <= 0) throw dimension_error("confidence map dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(height) * width)
        throw dimension_error("confidence value count does not match dimensions");
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw domain_error("confidence value outside [0,1]");
    }
}

namespace {

// Skips netpbm whitespace and '#' comment lines between header tokens.
void skip_header_space(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            while (c != '\n' && c != EOF) c = in.get();
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            in.get();
        } else {
            return;
        }
    }
}

long read_header_int(std::istream& in, const char* field) {
    skip_header_space(in);
    long value = -1;
    if (!(in >> value) || value < 0) {
        throw format_error(std::string("malformed netpbm header: bad ") + field);
    }
    return value;
}

std::uint8_t quantize(double v) {
    // round-half-up on the 255 scale
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

} // namespace

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open image file: " + path);

    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (!in || m0 != 'P' || (m1 != '5' && m1 != '6')) {
        throw format_error("unsupported netpbm magic (want P5 or P6): " + path);
    }
    const int channels = (m1 == '5') ? 1 : 3;

    const long w = read_header_int(in, "width");
    const long h = read_header_int(in, "height");
    const long maxval = read_header_int(in, "maxval");
    if (w <= 0) throw format_error("malformed netpbm header: bad width");
    if (h <= 0) throw format_error("malformed netpbm header: bad height");
    if (maxval != 255) throw format_error("unsupported netpbm maxval (want 255): " + std::to_string(maxval));

    // exactly one whitespace byte between maxval and payload
    const int sep = in.get();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') {
        throw format_error("malformed netpbm header: missing whitespace after maxval");
    }

    const std::size_t count = static_cast<std::size_t>(w) * h * channels;
    std::vector<std::uint8_t> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw format_error("truncated netpbm payload: " + path);
    }

    Image img;
    img.height = static_cast<int>(h);
    img.width = static_cast<int>(w);
    img.channels = channels;
    img.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

void save_image(const Image& img, const std::string& path) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open file for writing: " + path);

    out << (img.channels == 1 ? "P5" : "P6") << "\n"
        << img.width << " " << img.height << "\n"
        << 255 << "\n";
    std::vector<std::uint8_t> bytes(img.value_count());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize(img.data[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("write failure: " + path);
}

void save_mask(const BinaryMask& mask, const std::string& path) {
    mask.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open file for writing: " + path);
    out << "P5\n" << mask.width << " " << mask.height << "\n" << 255 << "\n";
    std::vector<std::uint8_t> bytes(mask.pixel_count());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw format_error("write failure: " + path);
}

BinaryMask load_mask(const std::string& path) {
    const Image img = load_image(path);
    if (img.channels != 1) throw format_error("mask file must be P5 greyscale: " + path);
    BinaryMask mask(img.height, img.width);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) {
        const double v = img.data[i];
        if (v == 0.0) {
            mask.bits[i] = 0;
        } else if (v == 1.0) {
            mask.bits[i] = 1;
        } else {
            throw format_error("mask pixel is neither 0 nor 255: " + path);
        }
    }
    return mask;
}

Image center_crop(const Image& img, int size) {
    if (size <= 0) throw dimension_error("crop size must be positive");
    if (size > img.height || size > img.width) {
        throw dimension_error("crop size " + std::to_string(size) + " exceeds image dimensions " +
                              std::to_string(img.height) + "x" + std::to_string(img.width));
    }
    const int y0 = (img.height - size) / 2;
    const int x0 = (img.width - size) / 2;
    Image out;
    out.height = size;
    out.width = size;
    out.channels = img.channels;
    out.data.resize(static_cast<std::size_t>(size) * size * img.channels);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            }
        }
    }
    return out;
}

} // namespace sparsepaint
