#include "tensorhub/digest.hpp"

#define XXH_INLINE_ALL
#include <xxhash.h>

#include "tensorhub/errors.hpp"

namespace tensorhub {

std::string Digest128::hex() const {
    static const char* k = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (auto b : bytes) {
        out.push_back(k[b >> 4]);
        out.push_back(k[b & 0xf]);
    }
    return out;
}

Digest128 Digest128::from_hex(std::string_view hex) {
    if (hex.size() != 32) throw FormatError("digest hex must be 32 chars");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw FormatError("invalid digest hex character");
    };
    Digest128 d;
    for (std::size_t i = 0; i < 16; ++i)
        d.bytes[i] = static_cast<std::uint8_t>((nib(hex[2 * i]) << 4) | nib(hex[2 * i + 1]));
    return d;
}

Digest128 tensor_digest(std::span<const std::uint8_t> data) {
    XXH128_hash_t h = XXH3_128bits(data.data(), data.size());
    XXH128_canonical_t canon;
    XXH128_canonicalFromHash(&canon, h);
    Digest128 d;
    for (std::size_t i = 0; i < 16; ++i) d.bytes[i] = canon.digest[i];
    return d;
}

}  // namespace tensorhub
