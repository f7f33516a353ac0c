#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "clift/nn.hpp"

namespace clift {

// Parameter checkpoint, little-endian:
//   "CKPT" | u32 version | u32 count |
//   count x { u32 name_len | name bytes | u32 ndim | u32 dims[] | f32 values[] }
inline constexpr uint32_t kCkptVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

inline float get_f32(std::istream& is, const char* what) {
    const uint32_t u = get_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const ParamStore<T>& ps, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
    os.write("CKPT", 4);
    detail::put_u32(os, kCkptVersion);
    detail::put_u32(os, static_cast<uint32_t>(ps.entries.size()));
    for (const auto& e : ps.entries) {
        detail::put_u32(os, static_cast<uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        const auto& t = e.var.value();
        detail::put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::put_u32(os, static_cast<uint32_t>(d));
        for (T v : t.data) detail::put_f32(os, static_cast<float>(v));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline std::map<std::string, Tensor<float>> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "CKPT", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = detail::get_u32(is, "version");
    if (version != kCkptVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t count = detail::get_u32(is, "count");
    std::map<std::string, Tensor<float>> out;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = detail::get_u32(is, "name length");
        if (name_len > (1u << 20)) throw std::runtime_error("checkpoint: absurd name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint: truncated name");
        const uint32_t ndim = detail::get_u32(is, "ndim");
        if (ndim > 8) throw std::runtime_error("checkpoint: absurd rank");
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(detail::get_u32(is, "dim"));
        Tensor<float> t(shape);
        for (auto& v : t.data) v = detail::get_f32(is, "value");
        if (out.count(name)) throw std::runtime_error("checkpoint: duplicate entry " + name);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

// Loads into an existing store; names and shapes must match exactly.
template <class T>
void load_checkpoint(ParamStore<T>& ps, const std::string& path) {
    auto table = read_checkpoint(path);
    for (auto& e : ps.entries) {
        auto it = table.find(e.name);
        if (it == table.end())
            throw std::runtime_error("checkpoint: missing parameter " + e.name + " in " + path);
        if (it->second.shape != e.var.value().shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + e.name + ": file " +
                                     shape_str(it->second.shape) + " vs model " +
                                     shape_str(e.var.value().shape));
        e.var.value() = it->second.template cast<T>();
        table.erase(it);
    }
    if (!table.empty())
        throw std::runtime_error("checkpoint: unknown parameter " + table.begin()->first);
}

}  // namespace clift
