#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace sparsepaint::ckpt {

struct NamedTensor {
    std::string name;
    std::array<std::uint32_t, 4> dims{};
    std::vector<float> data;
};

// Serialised model snapshot: magic "SPWGAN01", a key-value metadata block
// (config echo, epoch, validation loss), then named rank-4 tensors as
// 32-bit little-endian floats.
struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> meta; // ordered
    std::vector<NamedTensor> tensors;

    // Throws format_error when the key is absent.
    const std::string& meta_value(const std::string& key) const;
    bool has_meta(const std::string& key) const;
    void set_meta(const std::string& key, const std::string& value);

    // Throws format_error when the tensor is absent.
    const NamedTensor& tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace sparsepaint::ckpt
