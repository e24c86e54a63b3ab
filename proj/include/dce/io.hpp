#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dce/common.hpp"
#include "dce/mdp.hpp"

namespace dce {

namespace ioimpl {

inline void put_bytes(std::ostream& out, const unsigned char* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    put_bytes(out, buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
    static_assert(std::is_unsigned_v<T>);
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw IoError("truncated file while reading " + what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(buf[i]) << (8 * i);
    return value;
}

inline void write_f32(std::ostream& out, float v) {
    write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
}

inline float read_f32(std::istream& in, const std::string& what) {
    return std::bit_cast<float>(read_le<std::uint32_t>(in, what));
}

inline void write_f64(std::ostream& out, double v) {
    write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
}

inline double read_f64(std::istream& in, const std::string& what) {
    return std::bit_cast<double>(read_le<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const std::string& path) {
    char got[4];
    in.read(got, 4);
    if (in.gcount() != 4) throw IoError(path + ": truncated file while reading magic");
    if (std::memcmp(got, magic, 4) != 0)
        throw IoError(path + ": bad magic, expected " + std::string(magic, 4));
}

}  // namespace ioimpl

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Dataset file: little-endian, magic "DCE1", u32 version, u32 state_dim,
/// u32 action_dim, u64 count, u8 behavior tag code, then count records of
/// 32-bit floats (state, action, reward, next_state, done as 0.0/1.0).
inline void save_dataset(const OfflineDataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("DCE1", 4);
    ioimpl::write_le<std::uint32_t>(out, kDatasetVersion);
    ioimpl::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.state_dim));
    ioimpl::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.action_dim));
    ioimpl::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(data.items.size()));
    ioimpl::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(data.behavior_tag));
    for (const Transition& t : data.items) {
        if (t.state.size() != data.state_dim || t.next_state.size() != data.state_dim ||
            t.action.size() != data.action_dim)
            throw IoError("transition dimensions disagree with dataset header");
        for (double x : t.state) ioimpl::write_f32(out, static_cast<float>(x));
        for (double x : t.action) ioimpl::write_f32(out, static_cast<float>(x));
        ioimpl::write_f32(out, static_cast<float>(t.reward));
        for (double x : t.next_state) ioimpl::write_f32(out, static_cast<float>(x));
        ioimpl::write_f32(out, t.done ? 1.0f : 0.0f);
    }
    if (!out) throw IoError("write failed for " + path);
}

inline OfflineDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    ioimpl::expect_magic(in, "DCE1", path);
    std::uint32_t version = ioimpl::read_le<std::uint32_t>(in, "version");
    if (version != kDatasetVersion)
        throw IoError(path + ": unsupported dataset version " + std::to_string(version));
    OfflineDataset data;
    data.state_dim = ioimpl::read_le<std::uint32_t>(in, "state_dim");
    data.action_dim = ioimpl::read_le<std::uint32_t>(in, "action_dim");
    std::uint64_t count = ioimpl::read_le<std::uint64_t>(in, "count");
    std::uint8_t tag = ioimpl::read_le<std::uint8_t>(in, "behavior tag");
    if (tag > 4) throw IoError(path + ": invalid behavior tag code " + std::to_string(tag));
    data.behavior_tag = static_cast<BehaviorTier>(tag);
    data.items.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string where = "record " + std::to_string(i);
        Transition t;
        t.state.resize(data.state_dim);
        t.action.resize(data.action_dim);
        t.next_state.resize(data.state_dim);
        for (double& x : t.state) x = ioimpl::read_f32(in, where);
        for (double& x : t.action) x = ioimpl::read_f32(in, where);
        t.reward = ioimpl::read_f32(in, where);
        for (double& x : t.next_state) x = ioimpl::read_f32(in, where);
        t.done = ioimpl::read_f32(in, where) != 0.0f;
        data.items.push_back(std::move(t));
    }
    return data;
}

/// One named-by-position tensor in a checkpoint.
struct Tensor {
    std::vector<std::uint64_t> dims;
    std::vector<double> values;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::uint64_t d : dims) n *= static_cast<std::size_t>(d);
        return dims.empty() ? 0 : n;
    }
};

/// Checkpoint file: magic "DCEW", u32 version, then tensors until EOF,
/// each as u32 rank, u64 dims, little-endian 64-bit float values.
inline void save_tensors(const std::vector<Tensor>& tensors, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("DCEW", 4);
    ioimpl::write_le<std::uint32_t>(out, kCheckpointVersion);
    for (const Tensor& t : tensors) {
        if (t.values.size() != t.element_count())
            throw IoError("tensor value count disagrees with its dims");
        ioimpl::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint64_t d : t.dims) ioimpl::write_le<std::uint64_t>(out, d);
        for (double v : t.values) ioimpl::write_f64(out, v);
    }
    if (!out) throw IoError("write failed for " + path);
}

inline std::vector<Tensor> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    ioimpl::expect_magic(in, "DCEW", path);
    std::uint32_t version = ioimpl::read_le<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    std::vector<Tensor> tensors;
    while (true) {
        in.peek();
        if (in.eof()) break;
        std::string where = "tensor " + std::to_string(tensors.size());
        Tensor t;
        std::uint32_t rank = ioimpl::read_le<std::uint32_t>(in, where + " rank");
        if (rank > 8) throw IoError(path + ": implausible tensor rank " + std::to_string(rank));
        t.dims.resize(rank);
        for (std::uint64_t& d : t.dims) d = ioimpl::read_le<std::uint64_t>(in, where + " dims");
        t.values.resize(t.element_count());
        for (double& v : t.values) v = ioimpl::read_f64(in, where + " values");
        tensors.push_back(std::move(t));
    }
    return tensors;
}

}  // namespace dce
