#pragma once

#include <cstdint>

namespace coref {

// IEEE 754 binary16 storage. Conversion rounds to nearest, ties to even, and
// is done with integer arithmetic so the bit patterns match on all platforms.
std::uint16_t float_to_half(float value);
float half_to_float(std::uint16_t bits);

inline float round_to_half(float value) { return half_to_float(float_to_half(value)); }

}  // namespace coref
