#pragma once
// Checkpoint container: little-endian binary file holding named f64 arrays.
//
// Layout:
//   magic "AGXCKPT1"                      8 bytes
//   u64   array count
//   per array, sorted by name:
//     u32   name length, name bytes
//     u32   rank
//     u64   dims[rank]
//     f64   payload, row-major
//
// Round-trips must be bit-exact; all integers and doubles are serialized as
// explicit little-endian bytes.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "agx/error.hpp"
#include "agx/tensor.hpp"
#include "agx/toynet.hpp"

namespace agx {

using NamedArrays = std::map<std::string, Tensor>;

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'A', 'G', 'X', 'C', 'K', 'P', 'T', '1'};

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& buf, double d) {
    put_u64(buf, std::bit_cast<std::uint64_t>(d));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw Error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace ckpt_detail

inline std::string serialize_arrays(const NamedArrays& arrays) {
    using namespace ckpt_detail;
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u64(buf, arrays.size());
    for (const auto& [name, t] : arrays) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u64(buf, d);
        for (double v : t.raw()) put_f64(buf, v);
    }
    return buf;
}

inline NamedArrays deserialize_arrays(const std::string& buf) {
    using namespace ckpt_detail;
    Reader r{buf};
    if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw Error("checkpoint: bad magic");
    std::uint64_t count = r.u64();
    NamedArrays out;
    for (std::uint64_t a = 0; a < count; ++a) {
        std::string name = r.bytes(r.u32());
        std::uint32_t rank = r.u32();
        std::vector<std::size_t> shape;
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            n *= shape.back();
        }
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = r.f64();
        out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.pos != buf.size()) throw Error("checkpoint: trailing bytes");
    return out;
}

inline void save_arrays(const std::string& path, const NamedArrays& arrays) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open for writing: " + path);
    std::string buf = serialize_arrays(arrays);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw Error("checkpoint: write failed: " + path);
}

inline NamedArrays load_arrays(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_arrays(buf);
}

// ---------------------------------------------------------------------------
// model <-> named arrays
// ---------------------------------------------------------------------------

namespace ckpt_detail {

inline std::string idx2(std::size_t i) {
    char s[8];
    std::snprintf(s, sizeof(s), "%03zu", i);
    return s;
}

}  // namespace ckpt_detail

inline NamedArrays model_to_arrays(const net::ModelParams& p) {
    using ckpt_detail::idx2;
    NamedArrays a;
    for (std::size_t l = 0; l < p.anatomy_encoder.layers.size(); ++l) {
        a["anat.conv" + idx2(l) + ".w"] = p.anatomy_encoder.layers[l].w;
        a["anat.conv" + idx2(l) + ".b"] = p.anatomy_encoder.layers[l].b;
    }
    for (std::size_t l = 0; l < p.observation_encoder.layers.size(); ++l) {
        a["obs.conv" + idx2(l) + ".w"] = p.observation_encoder.layers[l].w;
        a["obs.conv" + idx2(l) + ".b"] = p.observation_encoder.layers[l].b;
    }
    for (std::size_t j = 0; j < p.anatomy_heads.size(); ++j)
        a["anat.head." + idx2(j)] = p.anatomy_heads[j];
    for (std::size_t k = 0; k < p.observation_heads.size(); ++k)
        a["obs.head." + idx2(k)] = p.observation_heads[k];
    return a;
}

inline net::ModelParams model_from_arrays(const NamedArrays& a) {
    using ckpt_detail::idx2;
    net::ModelParams p;
    for (std::size_t l = 0;; ++l) {
        auto wit = a.find("anat.conv" + idx2(l) + ".w");
        if (wit == a.end()) break;
        auto bit = a.find("anat.conv" + idx2(l) + ".b");
        if (bit == a.end()) throw Error("checkpoint: missing bias for anat.conv" + idx2(l));
        p.anatomy_encoder.layers.push_back({wit->second, bit->second});
    }
    for (std::size_t l = 0;; ++l) {
        auto wit = a.find("obs.conv" + idx2(l) + ".w");
        if (wit == a.end()) break;
        auto bit = a.find("obs.conv" + idx2(l) + ".b");
        if (bit == a.end()) throw Error("checkpoint: missing bias for obs.conv" + idx2(l));
        p.observation_encoder.layers.push_back({wit->second, bit->second});
    }
    for (std::size_t j = 0;; ++j) {
        auto it = a.find("anat.head." + idx2(j));
        if (it == a.end()) break;
        p.anatomy_heads.push_back(it->second);
    }
    for (std::size_t k = 0;; ++k) {
        auto it = a.find("obs.head." + idx2(k));
        if (it == a.end()) break;
        p.observation_heads.push_back(it->second);
    }
    if (p.anatomy_encoder.layers.empty() || p.observation_encoder.layers.empty())
        throw Error("checkpoint: no encoder layers found");
    return p;
}

inline void save_model(const std::string& path, const net::ModelParams& p) {
    save_arrays(path, model_to_arrays(p));
}

inline net::ModelParams load_model(const std::string& path) {
    return model_from_arrays(load_arrays(path));
}

}  // namespace agx
