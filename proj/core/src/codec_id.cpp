#include "tensorhub/codec_id.hpp"

#include <string>

#include "tensorhub/errors.hpp"

namespace tensorhub {

const char* codec_name(CodecId c) {
    switch (c) {
        case CodecId::RAW: return "raw";
        case CodecId::STANDALONE: return "standalone";
        case CodecId::TENSORX: return "tensorx";
        case CodecId::FMPP: return "fmpp";
    }
    return "?";
}

CodecId codec_from_string(std::string_view name) {
    if (name == "raw") return CodecId::RAW;
    if (name == "standalone") return CodecId::STANDALONE;
    if (name == "tensorx") return CodecId::TENSORX;
    if (name == "fmpp") return CodecId::FMPP;
    throw FormatError("unknown codec \"" + std::string(name) + "\"");
}

CodecId codec_from_code(std::uint8_t code) {
    if (code > static_cast<std::uint8_t>(CodecId::FMPP))
        throw CodecError("invalid codec id " + std::to_string(code));
    return static_cast<CodecId>(code);
}

}  // namespace tensorhub
