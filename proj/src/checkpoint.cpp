#include "sparsepaint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sparsepaint/errors.hpp"

namespace sparsepaint::ckpt {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'W', 'G', 'A', 'N', '0', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

std::uint32_t get_u32(std::istream& in, const char* field) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
        throw format_error(std::string("checkpoint truncated reading ") + field);
    }
    return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
           (static_cast<std::uint32_t>(bytes[2]) << 16) |
           (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const char* field) {
    const std::uint32_t len = get_u32(in, field);
    if (len > (1u << 20)) throw format_error(std::string("implausible length for ") + field);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len)) {
        throw format_error(std::string("checkpoint truncated reading ") + field);
    }
    return s;
}

} // namespace

const std::string& Checkpoint::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return v;
    }
    throw format_error("checkpoint metadata missing key: " + key);
}

bool Checkpoint::has_meta(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return true;
    }
    return false;
}

void Checkpoint::set_meta(const std::string& key, const std::string& value) {
    for (auto& [k, v] : meta) {
        if (k == key) {
            v = value;
            return;
        }
    }
    meta.emplace_back(key, value);
}

const NamedTensor& Checkpoint::tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw format_error("checkpoint missing tensor: " + name);
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<std::uint32_t>(c.meta.size()));
    for (const auto& [k, v] : c.meta) {
        put_string(out, k);
        put_string(out, v);
    }
    put_u32(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& t : c.tensors) {
        put_string(out, t.name);
        put_u32(out, 4); // rank
        std::uint64_t count = 1;
        for (std::uint32_t d : t.dims) {
            put_u32(out, d);
            count *= d;
        }
        if (count != t.data.size()) throw dimension_error("tensor size does not match dims: " + t.name);
        static_assert(sizeof(float) == 4);
        for (float f : t.data) {
            std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
            put_u32(out, bits);
        }
    }
    if (!out) throw format_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw format_error("bad checkpoint magic");
    }
    Checkpoint c;
    const std::uint32_t meta_count = get_u32(in, "metadata count");
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        std::string k = get_string(in, "metadata key");
        std::string v = get_string(in, "metadata value");
        c.meta.emplace_back(std::move(k), std::move(v));
    }
    const std::uint32_t tensor_count = get_u32(in, "tensor count");
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        NamedTensor t;
        t.name = get_string(in, "tensor name");
        const std::uint32_t rank = get_u32(in, "tensor rank");
        if (rank != 4) throw format_error("bad tensor rank for " + t.name);
        std::uint64_t count = 1;
        for (auto& d : t.dims) {
            d = get_u32(in, "tensor dim");
            count *= d;
        }
        if (count > (1ull << 31)) throw format_error("implausible tensor size for " + t.name);
        t.data.resize(static_cast<std::size_t>(count));
        for (auto& f : t.data) {
            f = std::bit_cast<float>(get_u32(in, "tensor payload"));
        }
        c.tensors.push_back(std::move(t));
    }
    return c;
}

} // namespace sparsepaint::ckpt
