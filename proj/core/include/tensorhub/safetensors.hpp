#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tensorhub/codec_id.hpp"
#include "tensorhub/digest.hpp"
#include "tensorhub/tensor_view.hpp"

namespace tensorhub {

// safetensors v0.4 layout: u64 little-endian header length N, N bytes of
// UTF-8 JSON mapping tensor names to {dtype, shape, data_offsets}, then the
// packed payload.

// Parses a model file into zero-copy views over `bytes`. Views are returned
// in header order. Throws FormatError on malformed headers, unknown dtypes,
// or overlapping / out-of-bounds offsets; messages carry the offending
// tensor name.
std::vector<TensorView> parse_model(std::span<const std::uint8_t> bytes);

// Serializes tensors in the given order. parse_model(write_model(T))
// reproduces T byte-exactly. Throws FormatError on duplicate names or
// dtype/shape/byte-length mismatches.
std::vector<std::uint8_t> write_model(const std::vector<TensorView>& tensors);

// Compression flags carried in the "__metadata__" section of an extended
// blob. Reserved keys: th.codec, th.base, th.dtype, th.shape, th.raw_len.
struct BlobFlags {
    CodecId codec = CodecId::RAW;
    std::optional<Digest128> base;  // present iff codec is a delta codec
    DType dtype = DType::F32;       // original element type
    std::vector<std::int64_t> shape;
    std::uint64_t raw_len = 0;  // original (uncompressed) byte length
};

// Wraps a (possibly compressed) payload in a safetensors-compatible
// container. RAW payloads keep their true dtype/shape so stock tooling can
// read them directly; compressed payloads are exposed as a U8 tensor of the
// compressed length, with the original dtype/shape preserved in the flags.
std::vector<std::uint8_t> write_blob(const std::string& name,
                                     std::span<const std::uint8_t> payload,
                                     const BlobFlags& flags);

struct BlobContents {
    std::string name;
    std::span<const std::uint8_t> payload;  // view into the input buffer
    BlobFlags flags;
};

// Inverse of write_blob.
BlobContents read_blob(std::span<const std::uint8_t> bytes);

}  // namespace tensorhub
