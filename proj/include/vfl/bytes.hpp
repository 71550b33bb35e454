#pragma once

// Small byte-level helpers shared by every module: hex, base64, and
// little-endian integer packing. All encodings here are fixed and
// documented in docs/formats.md; nothing in this file may depend on
// host endianness or locale.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vfl {

using Bytes = std::vector<std::uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

std::string hex_encode(std::span<const std::uint8_t> data);
// Throws std::invalid_argument on non-hex characters or odd length.
Bytes hex_decode(std::string_view hex);

std::string base64_encode(std::span<const std::uint8_t> data);
// Throws std::invalid_argument on malformed input.
Bytes base64_decode(std::string_view b64);

inline void put_u16_le(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32_le(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64_le(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint16_t get_u16_le(std::span<const std::uint8_t> b) {
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32_le(std::span<const std::uint8_t> b) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint64_t get_u64_le(std::span<const std::uint8_t> b) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

// Whole-file IO. Both throw std::runtime_error on failure.
Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);
void write_file(const std::string& path, std::string_view text);

}  // namespace vfl
