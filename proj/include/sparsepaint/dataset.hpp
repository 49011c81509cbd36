#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsepaint/image.hpp"

namespace sparsepaint {

// All P5/P6 files under `dir` (non-recursive), sorted by filename so load
// order never depends on directory enumeration. Throws format_error when no
// image is found; a failing file aborts with its path in the message.
// Optional center crop to crop x crop (0 = keep full size). All images must
// end up with identical dimensions.
std::vector<Image> load_dataset(const std::string& dir, int crop = 0);

std::vector<std::string> list_dataset_files(const std::string& dir);

// Deterministic train/validation split: shuffles indices with the seed and
// reserves round(fraction * n) of them (clamped to [1, n-1]) for validation.
// A single-image dataset is its own validation set.
struct DatasetSplit {
    std::vector<int> train;
    std::vector<int> val;
};
DatasetSplit split_dataset(int n, double val_fraction, std::uint64_t seed);

} // namespace sparsepaint
