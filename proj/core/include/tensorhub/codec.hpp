#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensorhub/backend.hpp"
#include "tensorhub/codec_id.hpp"
#include "tensorhub/digest.hpp"
#include "tensorhub/dtype.hpp"

namespace tensorhub {

constexpr std::uint32_t kDefaultChunkElements = 4u << 20;  // 4 Mi elements

// Chunked, byte-plane-compressed delta container.
//
// Serialized layout, little-endian: magic "THDX", u8 version=1, u8 codec_id,
// u8 dtype code, u8 backend_id, u64 element_count, u32 chunk_elements,
// 16B base_digest (zero for none), u32 chunk_count, chunk table of u32
// compressed lengths (chunk-major, plane-minor), then the concatenated
// plane payloads in table order. A table entry equal to the plane's raw
// length marks a stored (uncompressed) plane.
struct DeltaBlob {
    CodecId codec = CodecId::RAW;
    DType dtype = DType::F32;
    BackendId backend = BackendId::DEFLATE;
    std::uint64_t element_count = 0;
    std::uint32_t chunk_elements = 0;
    Digest128 base_digest{};  // zero when no base
    std::vector<std::uint32_t> chunk_table;  // chunk_count * planes entries
    std::vector<std::uint8_t> payload;

    std::uint64_t raw_length() const { return element_count * byte_width(dtype); }
    std::uint64_t stored_size() const;  // full serialized size

    std::vector<std::uint8_t> serialize() const;
    static DeltaBlob parse(std::span<const std::uint8_t> bytes);
};

// XOR delta, byte-plane decomposition, backend compression, one chunk of
// chunk_elements elements at a time. Chunks are independent: the blob is
// bit-identical for any worker count.
DeltaBlob tensorx_encode(std::span<const std::uint8_t> target,
                         std::span<const std::uint8_t> base, DType dtype,
                         std::uint32_t chunk_elements = kDefaultChunkElements,
                         unsigned workers = 1);

// Exact inverse; verifies digest(base) against the blob's base digest
// before any decode work.
std::vector<std::uint8_t> tensorx_decode(const DeltaBlob& blob,
                                         std::span<const std::uint8_t> base,
                                         unsigned workers = 1);

// Wrapping integer subtraction per element, zigzag sign interleave so
// small-magnitude residuals map to small codes, then the same byte-plane
// pipeline. Wrapping arithmetic is lossless for every bit pattern,
// including NaN/Inf payloads.
DeltaBlob fmpp_encode(std::span<const std::uint8_t> target,
                      std::span<const std::uint8_t> base, DType dtype,
                      std::uint32_t chunk_elements = kDefaultChunkElements,
                      unsigned workers = 1);

std::vector<std::uint8_t> fmpp_decode(const DeltaBlob& blob,
                                      std::span<const std::uint8_t> base,
                                      unsigned workers = 1);

// Byte-plane + backend compression with no base (how bases and loners are
// stored when plane compression is enabled).
DeltaBlob standalone_encode(std::span<const std::uint8_t> target, DType dtype,
                            std::uint32_t chunk_elements = kDefaultChunkElements,
                            unsigned workers = 1);

std::vector<std::uint8_t> standalone_decode(const DeltaBlob& blob, unsigned workers = 1);

// Verbatim container.
DeltaBlob raw_encode(std::span<const std::uint8_t> target, DType dtype);

// Dispatch on blob.codec. `base` may be empty for non-delta codecs.
std::vector<std::uint8_t> decode_blob(const DeltaBlob& blob,
                                      std::span<const std::uint8_t> base = {},
                                      unsigned workers = 1);

// Expansion guard: returns the blob unchanged unless its serialized size
// exceeds raw size + header, in which case a RAW blob is returned instead.
DeltaBlob apply_raw_fallback(DeltaBlob blob, std::span<const std::uint8_t> target);

}  // namespace tensorhub
