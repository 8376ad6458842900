#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tensorhub {

// Element types supported by the engine. The numeric value is the on-disk
// dtype code in blob headers; append only.
enum class DType : std::uint8_t {
    F64 = 0,
    F32 = 1,
    F16 = 2,
    BF16 = 3,
    I64 = 4,
    I32 = 5,
    I16 = 6,
    I8 = 7,
    U8 = 8,
    BOOL = 9,
};

// Bits per element (p). Always a multiple of 8.
constexpr int bits_per_element(DType t) {
    switch (t) {
        case DType::F64:
        case DType::I64:
            return 64;
        case DType::F32:
        case DType::I32:
            return 32;
        case DType::F16:
        case DType::BF16:
        case DType::I16:
            return 16;
        case DType::I8:
        case DType::U8:
        case DType::BOOL:
            return 8;
    }
    return 0;
}

constexpr std::size_t byte_width(DType t) {
    return static_cast<std::size_t>(bits_per_element(t)) / 8;
}

// Name as it appears in safetensors headers.
const char* dtype_name(DType t);

// Parses a safetensors dtype string. Throws FormatError on unknown or
// unsupported names (e.g. FP8 variants are rejected, not passed through).
DType dtype_from_string(std::string_view name);

DType dtype_from_code(std::uint8_t code);

}  // namespace tensorhub
