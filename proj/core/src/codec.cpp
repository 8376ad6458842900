#include "tensorhub/codec.hpp"

#include <cstring>
#include <string>

#include "tensorhub/errors.hpp"
#include "tensorhub/parallel.hpp"

namespace tensorhub {

namespace {

enum class Transform { COPY, XOR, SUB_ZIGZAG };

template <typename U>
using Signed = std::make_signed_t<U>;

// Residual transform for one chunk, elementwise over p-bit unsigned lanes.
// SUB_ZIGZAG: wrapping subtraction, then zigzag so +-small residuals land
// on small codes (d -> 2d for d >= 0, -d -> 2d-1).
template <typename U>
void forward_transform(Transform tf, const std::uint8_t* target,
                       const std::uint8_t* base, std::uint8_t* out,
                       std::size_t elems) {
    constexpr unsigned kBits = sizeof(U) * 8;
    for (std::size_t i = 0; i < elems; ++i) {
        U t;
        std::memcpy(&t, target + i * sizeof(U), sizeof(U));
        U r;
        if (tf == Transform::COPY) {
            r = t;
        } else {
            U b;
            std::memcpy(&b, base + i * sizeof(U), sizeof(U));
            if (tf == Transform::XOR) {
                r = t ^ b;
            } else {
                const U d = static_cast<U>(t - b);
                const auto s = static_cast<Signed<U>>(d);
                r = static_cast<U>((static_cast<U>(s) << 1) ^
                                   static_cast<U>(s >> (kBits - 1)));
            }
        }
        std::memcpy(out + i * sizeof(U), &r, sizeof(U));
    }
}

template <typename U>
void inverse_transform(Transform tf, const std::uint8_t* residual,
                       const std::uint8_t* base, std::uint8_t* out,
                       std::size_t elems) {
    for (std::size_t i = 0; i < elems; ++i) {
        U r;
        std::memcpy(&r, residual + i * sizeof(U), sizeof(U));
        U t;
        if (tf == Transform::COPY) {
            t = r;
        } else {
            U b;
            std::memcpy(&b, base + i * sizeof(U), sizeof(U));
            if (tf == Transform::XOR) {
                t = r ^ b;
            } else {
                const U mag = r >> 1;
                const U s = static_cast<U>(mag ^ static_cast<U>(-static_cast<U>(r & 1)));
                t = static_cast<U>(b + s);
            }
        }
        std::memcpy(out + i * sizeof(U), &t, sizeof(U));
    }
}

void run_forward(Transform tf, std::size_t esize, const std::uint8_t* target,
                 const std::uint8_t* base, std::uint8_t* out, std::size_t elems) {
    switch (esize) {
        case 1: forward_transform<std::uint8_t>(tf, target, base, out, elems); break;
        case 2: forward_transform<std::uint16_t>(tf, target, base, out, elems); break;
        case 4: forward_transform<std::uint32_t>(tf, target, base, out, elems); break;
        case 8: forward_transform<std::uint64_t>(tf, target, base, out, elems); break;
        default: throw CodecError("unsupported element width");
    }
}

void run_inverse(Transform tf, std::size_t esize, const std::uint8_t* residual,
                 const std::uint8_t* base, std::uint8_t* out, std::size_t elems) {
    switch (esize) {
        case 1: inverse_transform<std::uint8_t>(tf, residual, base, out, elems); break;
        case 2: inverse_transform<std::uint16_t>(tf, residual, base, out, elems); break;
        case 4: inverse_transform<std::uint32_t>(tf, residual, base, out, elems); break;
        case 8: inverse_transform<std::uint64_t>(tf, residual, base, out, elems); break;
        default: throw CodecError("unsupported element width");
    }
}

// Plane-major within chunk: all plane-0 bytes, then plane-1, ...
void transpose_to_planes(const std::uint8_t* residual, std::uint8_t* planes,
                         std::size_t elems, std::size_t esize) {
    for (std::size_t k = 0; k < esize; ++k) {
        std::uint8_t* plane = planes + k * elems;
        for (std::size_t i = 0; i < elems; ++i) plane[i] = residual[i * esize + k];
    }
}

void transpose_from_planes(const std::uint8_t* planes, std::uint8_t* residual,
                           std::size_t elems, std::size_t esize) {
    for (std::size_t k = 0; k < esize; ++k) {
        const std::uint8_t* plane = planes + k * elems;
        for (std::size_t i = 0; i < elems; ++i) residual[i * esize + k] = plane[i];
    }
}

Transform transform_for(CodecId codec) {
    switch (codec) {
        case CodecId::STANDALONE: return Transform::COPY;
        case CodecId::TENSORX: return Transform::XOR;
        case CodecId::FMPP: return Transform::SUB_ZIGZAG;
        default: throw CodecError("codec has no chunk pipeline");
    }
}

DeltaBlob encode_pipeline(CodecId codec, std::span<const std::uint8_t> target,
                          std::span<const std::uint8_t> base, DType dtype,
                          std::uint32_t chunk_elements, unsigned workers) {
    const std::size_t esize = byte_width(dtype);
    if (chunk_elements == 0) throw CodecError("chunk_elements must be > 0");
    if (target.size() % esize != 0)
        throw CodecError("target length is not a multiple of the element size");
    const Transform tf = transform_for(codec);
    if (tf != Transform::COPY && base.size() != target.size())
        throw CodecError("base length " + std::to_string(base.size()) +
                         " does not match target length " + std::to_string(target.size()));

    DeltaBlob blob;
    blob.codec = codec;
    blob.dtype = dtype;
    blob.backend = BackendId::DEFLATE;
    blob.element_count = target.size() / esize;
    blob.chunk_elements = chunk_elements;
    if (tf != Transform::COPY) blob.base_digest = tensor_digest(base);

    const std::uint64_t n = blob.element_count;
    const std::size_t chunks =
        static_cast<std::size_t>((n + chunk_elements - 1) / chunk_elements);

    // Per-chunk outputs land in preassigned slots; assembly below is
    // deterministic by chunk index.
    std::vector<std::vector<std::vector<std::uint8_t>>> chunk_planes(chunks);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::uint64_t first = static_cast<std::uint64_t>(c) * chunk_elements;
        const std::size_t elems = static_cast<std::size_t>(
            std::min<std::uint64_t>(chunk_elements, n - first));
        const std::size_t off = static_cast<std::size_t>(first) * esize;

        std::vector<std::uint8_t> residual(elems * esize);
        run_forward(tf, esize, target.data() + off,
                    tf == Transform::COPY ? nullptr : base.data() + off,
                    residual.data(), elems);
        std::vector<std::uint8_t> planes(elems * esize);
        transpose_to_planes(residual.data(), planes.data(), elems, esize);

        auto& out = chunk_planes[c];
        out.resize(esize);
        for (std::size_t k = 0; k < esize; ++k) {
            std::span<const std::uint8_t> plane(planes.data() + k * elems, elems);
            std::vector<std::uint8_t> comp = backend_compress(blob.backend, plane);
            if (comp.size() < elems) {
                out[k] = std::move(comp);
            } else {
                // Stored plane; length == raw length marks it at decode.
                out[k].assign(plane.begin(), plane.end());
            }
        }
    });

    blob.chunk_table.reserve(chunks * esize);
    std::size_t total = 0;
    for (const auto& cp : chunk_planes)
        for (const auto& plane : cp) {
            blob.chunk_table.push_back(static_cast<std::uint32_t>(plane.size()));
            total += plane.size();
        }
    blob.payload.reserve(total);
    for (const auto& cp : chunk_planes)
        for (const auto& plane : cp)
            blob.payload.insert(blob.payload.end(), plane.begin(), plane.end());
    return blob;
}

std::vector<std::uint8_t> decode_pipeline(const DeltaBlob& blob,
                                          std::span<const std::uint8_t> base,
                                          unsigned workers) {
    const Transform tf = transform_for(blob.codec);
    const std::size_t esize = byte_width(blob.dtype);
    const std::uint64_t n = blob.element_count;
    const std::uint64_t raw_len = n * esize;

    if (tf != Transform::COPY) {
        if (tensor_digest(base) != blob.base_digest)
            throw IntegrityError("base digest mismatch");
        if (base.size() != raw_len)
            throw CodecError("base length does not match blob element count");
    }
    if (blob.chunk_elements == 0 && n != 0)
        throw CodecError("corrupt blob: zero chunk size");

    const std::size_t chunks =
        n == 0 ? 0
               : static_cast<std::size_t>((n + blob.chunk_elements - 1) / blob.chunk_elements);
    if (blob.chunk_table.size() != chunks * esize)
        throw CodecError("corrupt chunk table: wrong entry count");

    // Precompute payload offsets per table entry.
    std::vector<std::size_t> offsets(blob.chunk_table.size() + 1, 0);
    for (std::size_t i = 0; i < blob.chunk_table.size(); ++i)
        offsets[i + 1] = offsets[i] + blob.chunk_table[i];
    if (offsets.back() != blob.payload.size())
        throw CodecError("corrupt chunk table: lengths do not sum to payload size");

    std::vector<std::uint8_t> out(raw_len);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::uint64_t first = static_cast<std::uint64_t>(c) * blob.chunk_elements;
        const std::size_t elems = static_cast<std::size_t>(
            std::min<std::uint64_t>(blob.chunk_elements, n - first));
        const std::size_t off = static_cast<std::size_t>(first) * esize;

        std::vector<std::uint8_t> planes(elems * esize);
        for (std::size_t k = 0; k < esize; ++k) {
            const std::size_t idx = c * esize + k;
            const std::size_t len = blob.chunk_table[idx];
            std::span<const std::uint8_t> src(blob.payload.data() + offsets[idx], len);
            std::span<std::uint8_t> dst(planes.data() + k * elems, elems);
            if (len == elems) {
                std::memcpy(dst.data(), src.data(), len);  // stored plane
            } else if (len > elems) {
                throw CodecError("corrupt chunk table: plane longer than raw");
            } else {
                backend_decompress(blob.backend, src, dst);
            }
        }
        std::vector<std::uint8_t> residual(elems * esize);
        transpose_from_planes(planes.data(), residual.data(), elems, esize);
        run_inverse(tf, esize, residual.data(),
                    tf == Transform::COPY ? nullptr : base.data() + off,
                    out.data() + off, elems);
    });
    return out;
}

void expect_codec(const DeltaBlob& blob, CodecId want) {
    if (blob.codec != want)
        throw CodecError(std::string("blob codec is ") + codec_name(blob.codec) +
                         ", expected " + codec_name(want));
}

}  // namespace

std::uint64_t DeltaBlob::stored_size() const {
    return 40 + chunk_table.size() * 4 + payload.size();
}

std::vector<std::uint8_t> DeltaBlob::serialize() const {
    std::vector<std::uint8_t> out;
    out.reserve(stored_size());
    auto push_u = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    out.insert(out.end(), {'T', 'H', 'D', 'X'});
    out.push_back(1);  // version
    out.push_back(static_cast<std::uint8_t>(codec));
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(static_cast<std::uint8_t>(backend));
    push_u(element_count, 8);
    push_u(chunk_elements, 4);
    out.insert(out.end(), base_digest.bytes.begin(), base_digest.bytes.end());
    push_u(chunk_table.size(), 4);
    for (auto len : chunk_table) push_u(len, 4);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

DeltaBlob DeltaBlob::parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 40 || std::memcmp(bytes.data(), "THDX", 4) != 0)
        throw CodecError("not a THDX blob");
    if (bytes[4] != 1) throw CodecError("unsupported blob version");

    auto read_u = [&](std::size_t off, int nbytes) {
        std::uint64_t v = 0;
        for (int i = nbytes - 1; i >= 0; --i) v = (v << 8) | bytes[off + i];
        return v;
    };

    DeltaBlob blob;
    blob.codec = codec_from_code(bytes[5]);
    blob.dtype = dtype_from_code(bytes[6]);
    blob.backend = backend_from_code(bytes[7]);
    blob.element_count = read_u(8, 8);
    blob.chunk_elements = static_cast<std::uint32_t>(read_u(16, 4));
    std::memcpy(blob.base_digest.bytes.data(), bytes.data() + 20, 16);
    const auto entries = static_cast<std::size_t>(read_u(36, 4));

    if (bytes.size() < 40 + entries * 4) throw CodecError("truncated chunk table");
    blob.chunk_table.resize(entries);
    std::size_t total = 0;
    for (std::size_t i = 0; i < entries; ++i) {
        blob.chunk_table[i] = static_cast<std::uint32_t>(read_u(40 + i * 4, 4));
        total += blob.chunk_table[i];
    }
    const std::size_t payload_off = 40 + entries * 4;
    if (bytes.size() - payload_off != total) throw CodecError("truncated blob payload");
    blob.payload.assign(bytes.begin() + payload_off, bytes.end());
    return blob;
}

DeltaBlob tensorx_encode(std::span<const std::uint8_t> target,
                         std::span<const std::uint8_t> base, DType dtype,
                         std::uint32_t chunk_elements, unsigned workers) {
    return encode_pipeline(CodecId::TENSORX, target, base, dtype, chunk_elements, workers);
}

std::vector<std::uint8_t> tensorx_decode(const DeltaBlob& blob,
                                         std::span<const std::uint8_t> base,
                                         unsigned workers) {
    expect_codec(blob, CodecId::TENSORX);
    return decode_pipeline(blob, base, workers);
}

DeltaBlob fmpp_encode(std::span<const std::uint8_t> target,
                      std::span<const std::uint8_t> base, DType dtype,
                      std::uint32_t chunk_elements, unsigned workers) {
    return encode_pipeline(CodecId::FMPP, target, base, dtype, chunk_elements, workers);
}

std::vector<std::uint8_t> fmpp_decode(const DeltaBlob& blob,
                                      std::span<const std::uint8_t> base,
                                      unsigned workers) {
    expect_codec(blob, CodecId::FMPP);
    return decode_pipeline(blob, base, workers);
}

DeltaBlob standalone_encode(std::span<const std::uint8_t> target, DType dtype,
                            std::uint32_t chunk_elements, unsigned workers) {
    return encode_pipeline(CodecId::STANDALONE, target, {}, dtype, chunk_elements, workers);
}

std::vector<std::uint8_t> standalone_decode(const DeltaBlob& blob, unsigned workers) {
    expect_codec(blob, CodecId::STANDALONE);
    return decode_pipeline(blob, {}, workers);
}

DeltaBlob raw_encode(std::span<const std::uint8_t> target, DType dtype) {
    const std::size_t esize = byte_width(dtype);
    if (target.size() % esize != 0)
        throw CodecError("target length is not a multiple of the element size");
    DeltaBlob blob;
    blob.codec = CodecId::RAW;
    blob.dtype = dtype;
    blob.element_count = target.size() / esize;
    blob.chunk_elements = 0;
    blob.payload.assign(target.begin(), target.end());
    return blob;
}

std::vector<std::uint8_t> decode_blob(const DeltaBlob& blob,
                                      std::span<const std::uint8_t> base,
                                      unsigned workers) {
    switch (blob.codec) {
        case CodecId::RAW:
            if (blob.payload.size() != blob.raw_length())
                throw CodecError("raw blob payload length mismatch");
            return {blob.payload.begin(), blob.payload.end()};
        case CodecId::STANDALONE:
            return standalone_decode(blob, workers);
        case CodecId::TENSORX:
            return tensorx_decode(blob, base, workers);
        case CodecId::FMPP:
            return fmpp_decode(blob, base, workers);
    }
    throw CodecError("invalid codec id");
}

DeltaBlob apply_raw_fallback(DeltaBlob blob, std::span<const std::uint8_t> target) {
    if (blob.codec != CodecId::RAW && blob.stored_size() >= target.size() + 40)
        return raw_encode(target, blob.dtype);
    return blob;
}

}  // namespace tensorhub
