#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "coref/error.hpp"

namespace coref::binio {

// Little-endian primitives for the shard and checkpoint formats.

template <typename UInt>
void put_uint(std::ostream& out, UInt value) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xffu);
    }
    out.write(bytes.data(), bytes.size());
}

inline void put_f32(std::ostream& out, float value) { put_uint(out, std::bit_cast<std::uint32_t>(value)); }

inline void put_bytes(std::ostream& out, std::string_view bytes) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class Reader {
public:
    Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    template <typename UInt>
    UInt uint() {
        std::array<unsigned char, sizeof(UInt)> bytes{};
        read(reinterpret_cast<char*>(bytes.data()), bytes.size());
        UInt value = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            value |= static_cast<UInt>(bytes[i]) << (8 * i);
        }
        return value;
    }

    float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    const std::string& source() const { return source_; }

private:
    void read(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError(source_ + ": truncated file");
        }
    }

    std::istream& in_;
    std::string source_;
};

}  // namespace coref::binio
