#include "sparsepaint/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "sparsepaint/errors.hpp"
#include "sparsepaint/rng.hpp"

namespace sparsepaint {

std::vector<std::string> list_dataset_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw format_error("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    return paths;
}

std::vector<Image> load_dataset(const std::string& dir, int crop) {
    const std::vector<std::string> paths = list_dataset_files(dir);
    if (paths.empty()) throw format_error("no .pgm/.ppm images in " + dir);
    std::vector<Image> images;
    images.reserve(paths.size());
    for (const std::string& path : paths) {
        try {
            Image img = load_image(path);
            if (crop > 0) img = center_crop(img, crop);
            images.push_back(std::move(img));
        } catch (const std::exception& e) {
            throw format_error(path + ": " + e.what());
        }
    }
    for (const Image& img : images) {
        if (img.height != images[0].height || img.width != images[0].width ||
            img.channels != images[0].channels) {
            throw dimension_error("dataset images must share dimensions (consider --crop)");
        }
    }
    return images;
}

DatasetSplit split_dataset(int n, double val_fraction, std::uint64_t seed) {
    if (n < 1) throw domain_error("dataset is empty");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw domain_error("validation fraction must be in [0,1)");
    }
    DatasetSplit split;
    if (n == 1) {
        split.train = {0};
        split.val = {0};
        return split;
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const std::int64_t j = rng.uniform_int(i + 1);
        std::swap(order[i], order[static_cast<int>(j)]);
    }
    int val_count = static_cast<int>(std::llround(val_fraction * n));
    val_count = std::clamp(val_count, 1, n - 1);
    split.val.assign(order.begin(), order.begin() + val_count);
    split.train.assign(order.begin() + val_count, order.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.train.begin(), split.train.end());
    return split;
}

} // namespace sparsepaint
