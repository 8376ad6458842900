#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tensorhub {

// General-purpose lossless backend behind the byte-plane codecs. The id is
// recorded in every blob header so alternates can be added without a
// format break.
enum class BackendId : std::uint8_t {
    DEFLATE = 1,  // zlib deflate at a fixed level
};

BackendId backend_from_code(std::uint8_t code);

// Compresses src. Output is self-delimiting for the given backend.
std::vector<std::uint8_t> backend_compress(BackendId id, std::span<const std::uint8_t> src);

// Decompresses src into dst, whose exact size is known from the blob
// header. Throws CodecError if the stream is corrupt or the size differs.
void backend_decompress(BackendId id, std::span<const std::uint8_t> src,
                        std::span<std::uint8_t> dst);

}  // namespace tensorhub
