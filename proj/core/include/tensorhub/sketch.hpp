#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensorhub/tensor_view.hpp"

namespace tensorhub {

// Parameters of the bit-level CountSketch. All sketches that will ever be
// compared must share identical params and seed; a store pins them at
// creation time.
struct SketchParams {
    std::uint8_t depth = 2;     // d, number of independent hash rows
    std::uint32_t width = 1024; // w, buckets per row; power of two, >= 2
    std::uint64_t seed = 0x7468736b;

    bool operator==(const SketchParams&) const = default;
    void validate() const;
    std::uint32_t log2_width() const;
};

// d x w signed-counter fingerprint plus the (n, p) normalization metadata.
// Counters accumulate in 64-bit; the serialized form stores 32-bit floats
// so the on-disk fingerprint is exactly d*w*4 bytes of counter data.
struct Sketch {
    SketchParams params;
    std::uint64_t element_count = 0;  // n
    std::uint8_t bits = 0;            // p
    std::vector<std::int64_t> counters;  // row-major, depth * width

    std::int64_t at(std::uint32_t row, std::uint32_t bucket) const {
        return counters[static_cast<std::size_t>(row) * params.width + bucket];
    }
};

// Builds the fingerprint in a single pass over the raw bytes: every set bit
// position k of each nonzero element i is hashed, per row r, to a bucket
// and a +-1 sign, and the bucket counter accumulates the sign. Zero
// elements are skipped by value test. With workers > 1 the element range is
// partitioned and per-worker counter matrices are merged by addition, so
// the result is identical for any worker count.
Sketch compute_sketch(const TensorView& tensor, const SketchParams& params,
                      unsigned workers = 1);

// Estimated number of differing bits between the tensors behind the two
// sketches: median over rows of the squared L2 norm of the row difference.
// For even depth the median is the mean of the two middle values (for the
// default d=2, the mean of both rows). Throws on parameter or (n, p)
// mismatch.
double hamming_estimate(const Sketch& a, const Sketch& b);

// hamming_estimate normalized by the total bit count p*n, clamped to [0,1].
double normalized_distance(const Sketch& a, const Sketch& b);

// Same estimate over pre-flattened float counter vectors (the serialized
// representation); used by the sketch index, which keeps float vectors.
double hamming_estimate(std::span<const float> a, std::span<const float> b,
                        const SketchParams& params);

// Serialized layout, little-endian: magic "THSK", u8 version, u8 d,
// u16 log2(w), u64 seed, u64 n, u8 p, then d*w 32-bit floats.
std::vector<std::uint8_t> serialize_sketch(const Sketch& s);
Sketch deserialize_sketch(std::span<const std::uint8_t> bytes);

// Flattened float counters in serialization order.
std::vector<float> sketch_to_floats(const Sketch& s);

}  // namespace tensorhub
