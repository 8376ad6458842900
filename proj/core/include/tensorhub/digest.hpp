#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>

namespace tensorhub {

// 128-bit content digest (TensorID). Stored in canonical big-endian byte
// order so that hex() matches the reference xxh3-128 digest output.
struct Digest128 {
    std::array<std::uint8_t, 16> bytes{};

    auto operator<=>(const Digest128&) const = default;

    bool is_zero() const {
        for (auto b : bytes)
            if (b) return false;
        return true;
    }

    std::string hex() const;
    static Digest128 from_hex(std::string_view hex);
};

// xxh3-128 over raw tensor bytes. Content only: name and shape do not
// participate, so byte-identical tensors dedup regardless of labeling.
Digest128 tensor_digest(std::span<const std::uint8_t> data);

struct Digest128Hash {
    std::size_t operator()(const Digest128& d) const {
        std::size_t h;
        static_assert(sizeof(h) <= 16);
        __builtin_memcpy(&h, d.bytes.data(), sizeof(h));
        return h;
    }
};

}  // namespace tensorhub
