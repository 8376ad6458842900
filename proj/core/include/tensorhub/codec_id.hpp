#pragma once

#include <cstdint>
#include <string_view>

namespace tensorhub {

// Codec dispatch key, recorded in every blob header.
enum class CodecId : std::uint8_t {
    RAW = 0,         // verbatim bytes, no base
    STANDALONE = 1,  // byte-plane + backend, no base
    TENSORX = 2,     // XOR delta + byte-plane + backend
    FMPP = 3,        // wrapping-subtraction delta + zigzag + byte-plane + backend
};

constexpr bool is_delta_codec(CodecId c) {
    return c == CodecId::TENSORX || c == CodecId::FMPP;
}

const char* codec_name(CodecId c);
CodecId codec_from_string(std::string_view name);
CodecId codec_from_code(std::uint8_t code);

}  // namespace tensorhub
