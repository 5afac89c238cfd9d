#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

// Checkpoint layout (all integers little-endian):
//   magic "FLUPRECK" | u32 version | u32 run-mode bits | u64 parameter count
//   per parameter: u32 name length | name bytes | u32 rank | u64 dims...
//                  | float32 payload (numel values)
// Values are stored as 32-bit floats regardless of the run mode, so a
// save -> load -> save cycle is byte-identical.

constexpr char kCheckpointMagic[8] = {'F', 'L', 'U', 'P', 'R', 'E', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_bytes(std::ofstream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

inline void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

inline void put_f32(std::ofstream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void get_bytes(std::ifstream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw ParseError("checkpoint '" + path + "': truncated file");
}

inline std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    get_bytes(in, b, 4, path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
    unsigned char b[8];
    get_bytes(in, b, 8, path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline float get_f32(std::ifstream& in, const std::string& path) {
    const std::uint32_t bits = get_u32(in, path);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace detail

template <typename T>
inline void save_checkpoint(const ParameterStore<T>& ps, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    detail::put_bytes(out, kCheckpointMagic, 8);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(sizeof(T) * 8));
    detail::put_u64(out, ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto& e = ps.entry(i);
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        detail::put_bytes(out, e.name.data(), e.name.size());
        detail::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
        for (std::size_t d : e.value.shape) detail::put_u64(out, d);
        for (T v : e.value.data) detail::put_f32(out, static_cast<float>(v));
    }
    out.flush();
    if (!out) throw ParseError("write failure on '" + path + "'");
}

struct CheckpointData {
    std::uint32_t run_mode_bits = 32;
    std::vector<std::pair<std::string, Tensor<float>>> params; // file order
};

inline CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "' for reading");
    char magic[8];
    detail::get_bytes(in, magic, 8, path);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw ParseError("checkpoint '" + path + "': bad magic");
    const std::uint32_t version = detail::get_u32(in, path);
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint '" + path + "': unsupported version " +
                         std::to_string(version));
    CheckpointData data;
    data.run_mode_bits = detail::get_u32(in, path);
    const std::uint64_t count = detail::get_u64(in, path);
    data.params.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::get_u32(in, path);
        std::string name(name_len, '\0');
        detail::get_bytes(in, name.data(), name_len, path);
        const std::uint32_t rank = detail::get_u32(in, path);
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d)
            shape[d] = static_cast<std::size_t>(detail::get_u64(in, path));
        Tensor<float> t(shape);
        for (float& v : t.data) v = detail::get_f32(in, path);
        data.params.emplace_back(std::move(name), std::move(t));
    }
    return data;
}

// Loads a checkpoint into an existing store; every stored parameter must
// already exist with the same shape. Parameters not present in the file are
// left untouched.
template <typename T>
inline void load_checkpoint_into(ParameterStore<T>& ps, const CheckpointData& data,
                                 const std::string& prefix = "") {
    for (const auto& [name, tensor] : data.params) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        if (!ps.has(name)) throw SchemaError("checkpoint parameter '" + name +
                                             "' not present in model");
        Tensor<T>& dst = ps.value(name);
        if (dst.shape != tensor.shape)
            throw SchemaError("checkpoint parameter '" + name + "' has shape " +
                              tensor.shape_str() + ", model expects " + dst.shape_str());
        for (std::size_t i = 0; i < tensor.numel(); ++i) dst[i] = static_cast<T>(tensor[i]);
    }
}

} // namespace flupre::nn
