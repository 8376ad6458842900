#include "tensorhub/sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "tensorhub/errors.hpp"
#include "tensorhub/parallel.hpp"

namespace tensorhub {

namespace {

// splitmix64 finalizer; the published mixer behind the per-(r,i,k) hash
// family. One evaluation yields both the bucket (low log2(w) bits) and the
// sign (the next bit up).
inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

constexpr std::uint64_t kElemMul = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kBitMul = 0xc2b2ae3d27d4eb4fULL;

inline std::uint64_t row_key(std::uint64_t seed, std::uint32_t row) {
    return mix64(seed + 0x165667b19e3779f9ULL * (row + 1));
}

template <typename Elem>
void accumulate_range(const std::uint8_t* data, std::uint64_t first,
                      std::uint64_t last, std::uint8_t depth,
                      std::uint32_t bucket_mask, std::uint32_t log2w,
                      const std::uint64_t* rkeys, std::int64_t* counters,
                      std::uint32_t width) {
    for (std::uint64_t i = first; i < last; ++i) {
        Elem e;
        std::memcpy(&e, data + i * sizeof(Elem), sizeof(Elem));
        if (e == 0) continue;  // all bits zero
        const std::uint64_t ih = i * kElemMul;
        for (std::uint8_t r = 0; r < depth; ++r) {
            std::int64_t* row = counters + static_cast<std::size_t>(r) * width;
            const std::uint64_t rk = rkeys[r] ^ ih;
            Elem m = e;
            while (m) {
                const unsigned k = static_cast<unsigned>(std::countr_zero(m));
                m &= m - 1;
                const std::uint64_t h = mix64(rk ^ ((k + 1) * kBitMul));
                const std::uint32_t bucket = static_cast<std::uint32_t>(h) & bucket_mask;
                row[bucket] += ((h >> log2w) & 1) ? 1 : -1;
            }
        }
    }
}

double median_of_rows(std::vector<double>& rows) {
    std::sort(rows.begin(), rows.end());
    const std::size_t d = rows.size();
    if (d % 2 == 1) return rows[d / 2];
    return 0.5 * (rows[d / 2 - 1] + rows[d / 2]);
}

void check_comparable(std::uint64_t na, std::uint64_t nb, std::uint8_t pa,
                      std::uint8_t pb, const SketchParams& a, const SketchParams& b) {
    if (!(a == b)) throw FormatError("sketch parameter mismatch");
    if (na != nb || pa != pb)
        throw FormatError("sketch shape mismatch: n " + std::to_string(na) + " vs " +
                          std::to_string(nb) + ", p " + std::to_string(pa) + " vs " +
                          std::to_string(pb));
}

}  // namespace

void SketchParams::validate() const {
    if (depth < 1) throw FormatError("sketch depth must be >= 1");
    if (width < 2 || (width & (width - 1)) != 0)
        throw FormatError("sketch width must be a power of two >= 2");
}

std::uint32_t SketchParams::log2_width() const {
    return static_cast<std::uint32_t>(std::countr_zero(width));
}

Sketch compute_sketch(const TensorView& tensor, const SketchParams& params,
                      unsigned workers) {
    params.validate();

    Sketch s;
    s.params = params;
    s.element_count = tensor.element_count();
    s.bits = static_cast<std::uint8_t>(bits_per_element(tensor.dtype));
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    s.counters.assign(cells, 0);

    if (tensor.bytes.size() != s.element_count * (s.bits / 8))
        throw FormatError("tensor byte length inconsistent with dtype/shape");
    if (s.element_count == 0) return s;

    std::vector<std::uint64_t> rkeys(params.depth);
    for (std::uint8_t r = 0; r < params.depth; ++r) rkeys[r] = row_key(params.seed, r);

    const std::uint32_t mask = params.width - 1;
    const std::uint32_t log2w = params.log2_width();
    const std::uint8_t* data = tensor.bytes.data();

    auto run = [&](std::uint64_t first, std::uint64_t last, std::int64_t* out) {
        switch (s.bits) {
            case 8:
                accumulate_range<std::uint8_t>(data, first, last, params.depth, mask,
                                               log2w, rkeys.data(), out, params.width);
                break;
            case 16:
                accumulate_range<std::uint16_t>(data, first, last, params.depth, mask,
                                                log2w, rkeys.data(), out, params.width);
                break;
            case 32:
                accumulate_range<std::uint32_t>(data, first, last, params.depth, mask,
                                                log2w, rkeys.data(), out, params.width);
                break;
            case 64:
                accumulate_range<std::uint64_t>(data, first, last, params.depth, mask,
                                                log2w, rkeys.data(), out, params.width);
                break;
            default:
                throw FormatError("unsupported element width");
        }
    };

    if (workers <= 1 || s.element_count < (1u << 16)) {
        run(0, s.element_count, s.counters.data());
        return s;
    }

    // Partition the element range; the update is a commutative sum, so
    // merging per-worker matrices by addition reproduces the serial result.
    const std::uint64_t n = s.element_count;
    const std::uint64_t stripe = (n + workers - 1) / workers;
    const unsigned parts = static_cast<unsigned>((n + stripe - 1) / stripe);
    std::vector<std::vector<std::int64_t>> partial(parts);
    parallel_for(parts, workers, [&](std::size_t w) {
        partial[w].assign(cells, 0);
        const std::uint64_t first = w * stripe;
        const std::uint64_t last = std::min(n, first + stripe);
        run(first, last, partial[w].data());
    });
    for (const auto& p : partial)
        for (std::size_t c = 0; c < cells; ++c) s.counters[c] += p[c];
    return s;
}

double hamming_estimate(const Sketch& a, const Sketch& b) {
    check_comparable(a.element_count, b.element_count, a.bits, b.bits, a.params, b.params);
    std::vector<double> rows(a.params.depth);
    for (std::uint8_t r = 0; r < a.params.depth; ++r) {
        double acc = 0;
        const std::size_t base = static_cast<std::size_t>(r) * a.params.width;
        for (std::uint32_t j = 0; j < a.params.width; ++j) {
            const double d = static_cast<double>(a.counters[base + j] - b.counters[base + j]);
            acc += d * d;
        }
        rows[r] = acc;
    }
    return median_of_rows(rows);
}

double hamming_estimate(std::span<const float> a, std::span<const float> b,
                        const SketchParams& params) {
    const std::size_t cells = static_cast<std::size_t>(params.depth) * params.width;
    if (a.size() != cells || b.size() != cells)
        throw FormatError("flattened sketch size mismatch");
    std::vector<double> rows(params.depth);
    for (std::uint8_t r = 0; r < params.depth; ++r) {
        double acc = 0;
        const std::size_t base = static_cast<std::size_t>(r) * params.width;
        for (std::uint32_t j = 0; j < params.width; ++j) {
            const double d = static_cast<double>(a[base + j]) - b[base + j];
            acc += d * d;
        }
        rows[r] = acc;
    }
    return median_of_rows(rows);
}

double normalized_distance(const Sketch& a, const Sketch& b) {
    const double est = hamming_estimate(a, b);
    const double total = static_cast<double>(a.bits) * static_cast<double>(a.element_count);
    if (total == 0) return 0.0;
    return std::clamp(est / total, 0.0, 1.0);
}

std::vector<float> sketch_to_floats(const Sketch& s) {
    std::vector<float> out(s.counters.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(s.counters[i]);
    return out;
}

std::vector<std::uint8_t> serialize_sketch(const Sketch& s) {
    const std::size_t cells = s.counters.size();
    std::vector<std::uint8_t> out;
    out.reserve(25 + cells * 4);
    auto push_u = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    out.insert(out.end(), {'T', 'H', 'S', 'K'});
    out.push_back(1);  // version
    out.push_back(s.params.depth);
    push_u(s.params.log2_width(), 2);
    push_u(s.params.seed, 8);
    push_u(s.element_count, 8);
    out.push_back(s.bits);
    for (std::size_t i = 0; i < cells; ++i) {
        const float f = static_cast<float>(s.counters[i]);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        push_u(u, 4);
    }
    return out;
}

Sketch deserialize_sketch(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 25 || std::memcmp(bytes.data(), "THSK", 4) != 0)
        throw FormatError("not a THSK sketch");
    auto read_u = [&](std::size_t off, int nbytes) {
        std::uint64_t v = 0;
        for (int i = nbytes - 1; i >= 0; --i) v = (v << 8) | bytes[off + i];
        return v;
    };
    if (bytes[4] != 1) throw FormatError("unsupported sketch version");

    Sketch s;
    s.params.depth = bytes[5];
    const auto log2w = static_cast<std::uint32_t>(read_u(6, 2));
    if (log2w >= 32) throw FormatError("sketch width out of range");
    s.params.width = 1u << log2w;
    s.params.seed = read_u(8, 8);
    s.element_count = read_u(16, 8);
    s.bits = bytes[24];
    s.params.validate();

    const std::size_t cells = static_cast<std::size_t>(s.params.depth) * s.params.width;
    if (bytes.size() != 25 + cells * 4)
        throw FormatError("sketch payload size mismatch");
    s.counters.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        const auto u = static_cast<std::uint32_t>(read_u(25 + i * 4, 4));
        float f;
        std::memcpy(&f, &u, 4);
        s.counters[i] = static_cast<std::int64_t>(f);
    }
    return s;
}

}  // namespace tensorhub
