#pragma once

// Checkpoint container: named n-d f32 tensors in a little-endian binary file.
// Layout: magic "HVSC", version u32, tensor count u32, then per tensor
// name length u16 + UTF-8 name, rank u8, dims u32 each, raw f32 values.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hvs/tensor.hpp"

namespace hvs {

constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;

    std::size_t count() const {
        std::size_t n = 1;
        for (std::uint32_t d : dims) n *= d;
        return n;
    }
};

using Checkpoint = std::map<std::string, NamedTensor>;

namespace detail {

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

inline void write_f32(std::ostream& out, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, sizeof(bits));
    write_le(out, bits);
}

inline float read_f32(std::istream& in) {
    std::uint32_t bits = read_le<std::uint32_t>(in);
    float value;
    std::memcpy(&value, &bits, sizeof(value));
    return value;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("checkpoint: cannot open for writing: " + path);
    out.write("HVSC", 4);
    detail::write_le(out, kCheckpointVersion);
    detail::write_le(out, static_cast<std::uint32_t>(ckpt.size()));
    for (const auto& [name, tensor] : ckpt) {
        if (name.size() > 0xffff) throw FormatError("checkpoint: tensor name too long");
        detail::write_le(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le(out, static_cast<std::uint8_t>(tensor.dims.size()));
        for (std::uint32_t d : tensor.dims) detail::write_le(out, d);
        if (tensor.values.size() != tensor.count())
            throw FormatError("checkpoint: tensor value count does not match dims");
        for (float v : tensor.values) detail::write_f32(out, v);
    }
    if (!out) throw FormatError("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("checkpoint: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "HVSC", 4) != 0)
        throw FormatError("checkpoint: bad magic");
    std::uint32_t version = detail::read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version");
    std::uint32_t count = detail::read_le<std::uint32_t>(in);
    Checkpoint ckpt;
    for (std::uint32_t t = 0; t < count; ++t) {
        std::uint16_t name_len = detail::read_le<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw FormatError("checkpoint: truncated file");
        std::uint8_t rank = detail::read_le<std::uint8_t>(in);
        NamedTensor tensor;
        tensor.dims.resize(rank);
        for (std::uint8_t d = 0; d < rank; ++d)
            tensor.dims[d] = detail::read_le<std::uint32_t>(in);
        tensor.values.resize(tensor.count());
        for (float& v : tensor.values) v = detail::read_f32(in);
        ckpt.emplace(std::move(name), std::move(tensor));
    }
    return ckpt;
}

inline NamedTensor tensor_of(const Tensor2& t) {
    return NamedTensor{{static_cast<std::uint32_t>(t.rows), static_cast<std::uint32_t>(t.cols)},
                       t.data};
}

inline NamedTensor tensor_of(const std::vector<float>& v) {
    return NamedTensor{{static_cast<std::uint32_t>(v.size())}, v};
}

inline NamedTensor scalar_of(float v) { return NamedTensor{{1}, {v}}; }

inline const NamedTensor& require(const Checkpoint& ckpt, const std::string& name) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) throw FormatError("checkpoint: missing tensor: " + name);
    return it->second;
}

inline Tensor2 tensor2_from(const NamedTensor& t) {
    if (t.dims.size() != 2) throw FormatError("checkpoint: expected rank-2 tensor");
    Tensor2 out(t.dims[0], t.dims[1]);
    out.data = t.values;
    return out;
}

}  // namespace hvs
