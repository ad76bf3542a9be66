#pragma once
// Portable graymap export for heatmap inspection. Maps are min-max scaled to
// 0..255; a constant map writes all zeros.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "agx/error.hpp"
#include "agx/tensor.hpp"

namespace agx {

enum class PgmFormat { P2_ascii, P5_binary };

inline std::string to_pgm(const Tensor& map, PgmFormat format = PgmFormat::P5_binary) {
    if (map.rank() != 2) throw Error("pgm: expected a 2-d map");
    const std::size_t H = map.dim(0), W = map.dim(1);
    double lo = map.min(), hi = map.max();
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::ostringstream out;
    out << (format == PgmFormat::P2_ascii ? "P2" : "P5") << '\n'
        << W << ' ' << H << '\n' << 255 << '\n';
    for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
            int v = static_cast<int>(std::lround((map.at(i, j) - lo) * scale));
            v = std::clamp(v, 0, 255);
            if (format == PgmFormat::P2_ascii)
                out << v << (j + 1 == W ? '\n' : ' ');
            else
                out.put(static_cast<char>(static_cast<std::uint8_t>(v)));
        }
    }
    return out.str();
}

inline void write_pgm(const std::string& path, const Tensor& map,
                      PgmFormat format = PgmFormat::P5_binary) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("pgm: cannot open for writing: " + path);
    std::string buf = to_pgm(map, format);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw Error("pgm: write failed: " + path);
}

}  // namespace agx
