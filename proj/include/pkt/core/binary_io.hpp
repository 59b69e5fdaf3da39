#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pkt/core/errors.hpp"

// Little-endian primitives for the checkpoint and prefix file formats.

namespace pkt::binio {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    v = to_le(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64s(std::ostream& out, std::span<const double> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (double v : values) {
            const double le = to_le(v);
            out.write(reinterpret_cast<const char*>(&le), sizeof le);
        }
    }
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw DataError(what + ": file truncated");
}

inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
    std::uint32_t v;
    read_exact(in, &v, sizeof v, what);
    return to_le(v);
}

inline void read_f64s(std::istream& in, std::span<double> dst, const std::string& what) {
    read_exact(in, dst.data(), dst.size_bytes(), what);
    if constexpr (std::endian::native == std::endian::big) {
        for (double& v : dst) v = to_le(v);
    }
}

/// Bytes of a double span in little-endian order (for hashing).
inline std::vector<std::uint8_t> le_bytes(std::span<const double> values) {
    std::vector<std::uint8_t> out(values.size_bytes());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double le = to_le(values[i]);
        std::memcpy(out.data() + i * sizeof(double), &le, sizeof(double));
    }
    return out;
}

}  // namespace pkt::binio
