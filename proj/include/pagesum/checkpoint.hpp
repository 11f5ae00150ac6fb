#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "pagesum/model.hpp"
#include "pagesum/optim.hpp"

namespace pagesum {

// Checkpoint layout (all integers and floats little-endian):
//   "PGSM" | u32 version | u32 json_len | config JSON | u32 param_count
//   per parameter, name-sorted: u32 name_len | name | u32 rank | u64 dims[] | f32 data[]
//   u8 optimizer_flag | if 1: u64 step | per parameter: f32 m[] | f32 v[]
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float required");

inline void write_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void write_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

inline void read_bytes(std::istream& is, char* dst, std::size_t n, const char* what) {
    is.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw format_error(std::string("checkpoint: truncated while reading ") + what);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    read_bytes(is, reinterpret_cast<char*>(b), 4, what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    read_bytes(is, reinterpret_cast<char*>(b), 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline float read_f32(std::istream& is, const char* what) {
    const std::uint32_t bits = read_u32(is, what);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what, std::size_t cap = 1u << 20) {
    const std::uint32_t len = read_u32(is, what);
    if (len > cap) throw format_error(std::string("checkpoint: implausible length for ") + what);
    std::string s(len, '\0');
    if (len) read_bytes(is, s.data(), len, what);
    return s;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const Adam<T>* opt = nullptr) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw input_error("cannot write checkpoint: " + tmp);
        os.write("PGSM", 4);
        detail::write_u32(os, kCheckpointVersion);
        detail::write_string(os, model.cfg.to_json().dump());
        detail::write_u32(os, static_cast<std::uint32_t>(model.params.size()));
        for (const auto& [name, tensor] : model.params) {
            detail::write_string(os, name);
            detail::write_u32(os, static_cast<std::uint32_t>(tensor.rank()));
            for (const std::size_t d : tensor.shape()) detail::write_u64(os, d);
            for (std::size_t i = 0; i < tensor.numel(); ++i)
                detail::write_f32(os, static_cast<float>(tensor.at(i)));
        }
        os.put(opt ? char(1) : char(0));
        if (opt) {
            detail::write_u64(os, opt->step_count());
            for (const auto& [name, tensor] : model.params) {
                const auto it = opt->state().find(name);
                const std::size_t n = tensor.numel();
                for (std::size_t i = 0; i < n; ++i)
                    detail::write_f32(os, it == opt->state().end() ? 0.0f : static_cast<float>(it->second.m[i]));
                for (std::size_t i = 0; i < n; ++i)
                    detail::write_f32(os, it == opt->state().end() ? 0.0f : static_cast<float>(it->second.v[i]));
            }
        }
        if (!os) throw input_error("write failure on checkpoint: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw input_error("cannot move checkpoint into place: " + path);
}

template <typename T>
struct LoadedCheckpoint {
    Model<T> model;
    bool has_optimizer = false;
    std::uint64_t opt_step = 0;
    std::map<std::string, typename Adam<T>::Moments> moments;

    void restore_into(Adam<T>& opt) const {
        if (!has_optimizer) throw input_error("checkpoint carries no optimizer state");
        opt.restore(opt_step, moments);
    }
};

// Reads and validates the whole file before returning; a malformed or
// truncated checkpoint throws without producing a partially loaded model.
template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw input_error("cannot open checkpoint: " + path);

    char magic[4];
    detail::read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, "PGSM", 4) != 0) throw format_error("checkpoint: bad magic bytes");
    const std::uint32_t version = detail::read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw format_error("checkpoint: unsupported version " + std::to_string(version));

    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(nlohmann::json::parse(detail::read_string(is, "config")));
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("checkpoint: config JSON: ") + e.what());
    }

    const std::uint32_t count = detail::read_u32(is, "parameter count");
    std::map<std::string, Tensor<T>> loaded;
    for (std::uint32_t p = 0; p < count; ++p) {
        const std::string name = detail::read_string(is, "parameter name", 4096);
        const std::uint32_t rank = detail::read_u32(is, "rank");
        if (rank == 0 || rank > 4) throw format_error("checkpoint: parameter '" + name + "' has rank " + std::to_string(rank));
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            const std::uint64_t v = detail::read_u64(is, "dimension");
            if (v == 0 || v > (1u << 28)) throw format_error("checkpoint: implausible dimension in '" + name + "'");
            d = static_cast<std::size_t>(v);
            numel *= d;
        }
        std::vector<T> data(numel);
        for (auto& x : data) x = static_cast<T>(detail::read_f32(is, "tensor data"));
        if (loaded.count(name)) throw format_error("checkpoint: duplicate parameter '" + name + "'");
        loaded.emplace(name, Tensor<T>::from_data(std::move(shape), std::move(data)));
    }

    // The stored set must agree exactly with what the config dictates.
    const auto inventory = Model<T>::parameter_inventory(cfg);
    if (inventory.size() != loaded.size())
        throw format_error("checkpoint: expected " + std::to_string(inventory.size()) + " parameters, found " +
                           std::to_string(loaded.size()));
    for (const ParamSpec& ps : inventory) {
        const auto it = loaded.find(ps.name);
        if (it == loaded.end()) throw format_error("checkpoint: missing parameter '" + ps.name + "'");
        if (it->second.shape() != ps.shape)
            throw format_error("checkpoint: parameter '" + ps.name + "' has shape " + shape_str(it->second.shape()) +
                               ", config requires " + shape_str(ps.shape));
    }

    LoadedCheckpoint<T> out;
    out.model.cfg = cfg;
    out.model.params = std::move(loaded);

    char flag = 0;
    detail::read_bytes(is, &flag, 1, "optimizer flag");
    if (flag != 0 && flag != 1) throw format_error("checkpoint: bad optimizer flag");
    if (flag == 1) {
        out.has_optimizer = true;
        out.opt_step = detail::read_u64(is, "optimizer step");
        for (const auto& [name, tensor] : out.model.params) {
            typename Adam<T>::Moments mom;
            mom.m.resize(tensor.numel());
            mom.v.resize(tensor.numel());
            for (auto& x : mom.m) x = static_cast<T>(detail::read_f32(is, "optimizer moment"));
            for (auto& x : mom.v) x = static_cast<T>(detail::read_f32(is, "optimizer moment"));
            out.moments.emplace(name, std::move(mom));
        }
    }
    is.peek();
    if (!is.eof()) throw format_error("checkpoint: trailing bytes after payload");
    return out;
}

}  // namespace pagesum
