#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensorhub/dtype.hpp"

namespace tensorhub {

// Zero-copy view of one named tensor inside a model file. `bytes` points
// into the caller-owned buffer (typically a memory-mapped file) and stays
// valid only as long as that buffer does.
struct TensorView {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::int64_t> shape;
    std::span<const std::uint8_t> bytes;

    // Product of shape dimensions; empty shape means a scalar (n = 1).
    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (auto d : shape) n *= static_cast<std::uint64_t>(d);
        return n;
    }

    std::uint64_t byte_length() const {
        return element_count() * byte_width(dtype);
    }
};

std::string shape_to_string(const std::vector<std::int64_t>& shape);
std::vector<std::int64_t> shape_from_string(std::string_view s);

}  // namespace tensorhub
