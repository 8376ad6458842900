#include "tensorhub/tensor_view.hpp"

#include <charconv>

#include "tensorhub/errors.hpp"

namespace tensorhub {

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(shape[i]);
    }
    out += ']';
    return out;
}

std::vector<std::int64_t> shape_from_string(std::string_view s) {
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw FormatError("malformed shape string \"" + std::string(s) + "\"");
    std::vector<std::int64_t> shape;
    s.remove_prefix(1);
    s.remove_suffix(1);
    while (!s.empty()) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc())
            throw FormatError("malformed shape component in \"" + std::string(s) + "\"");
        shape.push_back(v);
        s.remove_prefix(static_cast<std::size_t>(p - s.data()));
        if (!s.empty()) {
            if (s.front() != ',') throw FormatError("malformed shape string");
            s.remove_prefix(1);
        }
    }
    return shape;
}

}  // namespace tensorhub
