#pragma once

// Tensor checkpoint format shared by all networks:
//   magic "PGRW", u32 version, u32 tensor count, then per tensor:
//   u32 name length, UTF-8 name, u32 rank, u64 dims, little-endian f32 data.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "powergrow/tensor.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

constexpr std::uint32_t kCheckpointVersion = 1;

namespace ckptdetail {

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint truncated: " + path);
    return v;
}

}  // namespace ckptdetail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("PGRW", 4);
    ckptdetail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    ckptdetail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        ckptdetail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        ckptdetail::write_pod<std::uint32_t>(out, 2);
        ckptdetail::write_pod<std::uint64_t>(out, t.rows());
        ckptdetail::write_pod<std::uint64_t>(out, t.cols());
        for (double v : t.data()) ckptdetail::write_pod<float>(out, static_cast<float>(v));
    }
    if (!out) throw DataError("checkpoint write failed: " + path);
}

// name -> (dims, f32-rounded values)
inline std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>>
load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PGRW", 4) != 0)
        throw DataError("bad checkpoint magic in " + path);
    auto version = ckptdetail::read_pod<std::uint32_t>(in, path);
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    auto count = ckptdetail::read_pod<std::uint32_t>(in, path);
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> out;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = ckptdetail::read_pod<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw DataError("checkpoint truncated: " + path);
        auto rank = ckptdetail::read_pod<std::uint32_t>(in, path);
        std::vector<std::size_t> dims;
        std::size_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            auto dim = ckptdetail::read_pod<std::uint64_t>(in, path);
            dims.push_back(static_cast<std::size_t>(dim));
            total *= static_cast<std::size_t>(dim);
        }
        std::vector<double> data(total);
        for (std::size_t k = 0; k < total; ++k)
            data[k] = static_cast<double>(ckptdetail::read_pod<float>(in, path));
        out.emplace(std::move(name), std::make_pair(std::move(dims), std::move(data)));
    }
    return out;
}

inline std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    return h;
}

}  // namespace powergrow
