#include "tensorhub/dtype.hpp"

#include "tensorhub/errors.hpp"

namespace tensorhub {

const char* dtype_name(DType t) {
    switch (t) {
        case DType::F64: return "F64";
        case DType::F32: return "F32";
        case DType::F16: return "F16";
        case DType::BF16: return "BF16";
        case DType::I64: return "I64";
        case DType::I32: return "I32";
        case DType::I16: return "I16";
        case DType::I8: return "I8";
        case DType::U8: return "U8";
        case DType::BOOL: return "BOOL";
    }
    return "?";
}

DType dtype_from_string(std::string_view name) {
    if (name == "F64") return DType::F64;
    if (name == "F32") return DType::F32;
    if (name == "F16") return DType::F16;
    if (name == "BF16") return DType::BF16;
    if (name == "I64") return DType::I64;
    if (name == "I32") return DType::I32;
    if (name == "I16") return DType::I16;
    if (name == "I8") return DType::I8;
    if (name == "U8") return DType::U8;
    if (name == "BOOL") return DType::BOOL;
    throw FormatError("unsupported dtype \"" + std::string(name) + "\"");
}

DType dtype_from_code(std::uint8_t code) {
    if (code > static_cast<std::uint8_t>(DType::BOOL))
        throw FormatError("invalid dtype code " + std::to_string(code));
    return static_cast<DType>(code);
}

}  // namespace tensorhub
