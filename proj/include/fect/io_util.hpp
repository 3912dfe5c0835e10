#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "fect/errors.hpp"

namespace fect {

// Little-endian scalar IO, independent of host byte order.

inline void write_u16_le(std::ostream& out, std::uint16_t v) {
    const std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xff),
                               static_cast<std::uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    std::uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_f32_le(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32_le(out, bits);
}

inline void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(out, bits);
}

inline std::uint16_t read_u16_le(std::istream& in) {
    std::uint8_t b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    if (!in) throw ParseError("unexpected end of binary stream");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t read_u32_le(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("unexpected end of binary stream");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint64_t read_u64_le(std::istream& in) {
    std::uint8_t b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("unexpected end of binary stream");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline float read_f32_le(std::istream& in) {
    const std::uint32_t bits = read_u32_le(in);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline double read_f64_le(std::istream& in) {
    const std::uint64_t bits = read_u64_le(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline void expect_magic(std::istream& in, const std::string& magic,
                         const std::string& what) {
    std::string got(magic.size(), '\0');
    in.read(got.data(), static_cast<long>(magic.size()));
    if (!in || got != magic)
        throw ParseError(what + ": bad magic, expected \"" + magic + "\"");
}

} // namespace fect
