#pragma once

#include "belief/common.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace belief::io {

// Explicit little-endian encoding, independent of host byte order.

inline void put_u32(std::ostream &out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    }
    out.write(bytes, 4);
}

inline void put_u64(std::ostream &out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    }
    out.write(bytes, 8);
}

inline void put_f32(std::ostream &out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream &out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream &in) {
    unsigned char bytes[4];
    if (!in.read(reinterpret_cast<char *>(bytes), 4)) {
        throw Error(ErrorCode::FormatError, "unexpected end of file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    }
    return v;
}

inline std::uint64_t get_u64(std::istream &in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char *>(bytes), 8)) {
        throw Error(ErrorCode::FormatError, "unexpected end of file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return v;
}

inline float get_f32(std::istream &in) { return std::bit_cast<float>(get_u32(in)); }
inline double get_f64(std::istream &in) { return std::bit_cast<double>(get_u64(in)); }

} // namespace belief::io
