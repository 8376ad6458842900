#include "tensorhub/backend.hpp"

#include <zlib.h>

#include <string>

#include "tensorhub/errors.hpp"

namespace tensorhub {

namespace {
// Fixed level: the byte-plane transform already concentrates redundancy, so
// a fast level captures nearly all of the gain.
constexpr int kDeflateLevel = 1;
}  // namespace

BackendId backend_from_code(std::uint8_t code) {
    if (code != static_cast<std::uint8_t>(BackendId::DEFLATE))
        throw CodecError("unknown backend id " + std::to_string(code));
    return BackendId::DEFLATE;
}

std::vector<std::uint8_t> backend_compress(BackendId id, std::span<const std::uint8_t> src) {
    if (id != BackendId::DEFLATE) throw CodecError("unknown backend");
    uLongf bound = compressBound(static_cast<uLong>(src.size()));
    std::vector<std::uint8_t> out(bound);
    int rc = compress2(out.data(), &bound, src.data(), static_cast<uLong>(src.size()),
                       kDeflateLevel);
    if (rc != Z_OK) throw CodecError("deflate failed, zlib rc " + std::to_string(rc));
    out.resize(bound);
    return out;
}

void backend_decompress(BackendId id, std::span<const std::uint8_t> src,
                        std::span<std::uint8_t> dst) {
    if (id != BackendId::DEFLATE) throw CodecError("unknown backend");
    uLongf dst_len = static_cast<uLongf>(dst.size());
    int rc = uncompress(dst.data(), &dst_len, src.data(), static_cast<uLong>(src.size()));
    if (rc != Z_OK || dst_len != dst.size())
        throw CodecError("inflate failed, zlib rc " + std::to_string(rc));
}

}  // namespace tensorhub
