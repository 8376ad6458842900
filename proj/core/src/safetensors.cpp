#include "tensorhub/safetensors.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include <json.hpp>

#include "tensorhub/errors.hpp"

namespace tensorhub {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void write_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::vector<TensorView> parse_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw FormatError("file shorter than 8-byte header length");
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (header_len > bytes.size() - 8)
        throw FormatError("header length " + std::to_string(header_len) +
                          " exceeds file size " + std::to_string(bytes.size()));

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const json::exception& e) {
        throw FormatError(std::string("header JSON parse failure: ") + e.what());
    }
    if (!header.is_object()) throw FormatError("header JSON is not an object");

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
    std::vector<TensorView> views;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;

    for (auto& [name, entry] : header.items()) {
        if (name == "__metadata__") continue;
        auto fail = [&](const std::string& why) {
            throw FormatError("tensor \"" + name + "\": " + why);
        };
        if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
            !entry.contains("data_offsets"))
            fail("entry missing dtype/shape/data_offsets");

        TensorView v;
        v.name = name;
        v.dtype = dtype_from_string(entry["dtype"].get<std::string>());
        for (auto& d : entry["shape"]) {
            if (!d.is_number_integer() || d.get<std::int64_t>() < 0)
                fail("negative or non-integer shape dimension");
            v.shape.push_back(d.get<std::int64_t>());
        }
        auto& off = entry["data_offsets"];
        if (!off.is_array() || off.size() != 2) fail("data_offsets must be a 2-array");
        const std::uint64_t begin = off[0].get<std::uint64_t>();
        const std::uint64_t end = off[1].get<std::uint64_t>();
        if (begin > end) fail("data_offsets begin > end");
        if (end > payload.size()) fail("data_offsets out of bounds");
        if (end - begin != v.byte_length())
            fail("payload length " + std::to_string(end - begin) +
                 " does not match dtype/shape (" + std::to_string(v.byte_length()) + ")");
        v.bytes = payload.subspan(begin, end - begin);
        ranges.emplace_back(begin, end);
        views.push_back(std::move(v));
    }

    // Overlap check over the declared ranges (zero-length ranges cannot overlap).
    std::vector<std::size_t> order(ranges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ranges[a] < ranges[b]; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto& prev = ranges[order[i - 1]];
        const auto& cur = ranges[order[i]];
        if (cur.first < prev.second && cur.first != cur.second && prev.first != prev.second)
            throw FormatError("tensor \"" + views[order[i]].name +
                              "\": data_offsets overlap \"" + views[order[i - 1]].name + "\"");
    }
    return views;
}

std::vector<std::uint8_t> write_model(const std::vector<TensorView>& tensors) {
    json header = json::object();
    std::unordered_set<std::string> seen;
    std::uint64_t offset = 0;
    for (const auto& t : tensors) {
        if (!seen.insert(t.name).second)
            throw FormatError("duplicate tensor name \"" + t.name + "\"");
        if (t.bytes.size() != t.byte_length())
            throw FormatError("tensor \"" + t.name + "\": byte length " +
                              std::to_string(t.bytes.size()) + " does not match dtype/shape");
        json entry;
        entry["dtype"] = dtype_name(t.dtype);
        entry["shape"] = t.shape;
        entry["data_offsets"] = {offset, offset + t.bytes.size()};
        header[t.name] = std::move(entry);
        offset += t.bytes.size();
    }

    std::string hjson = header.dump();
    // Pad to 8-byte alignment with trailing spaces, as stock writers do.
    while (hjson.size() % 8 != 0) hjson.push_back(' ');

    std::vector<std::uint8_t> out;
    out.reserve(8 + hjson.size() + offset);
    write_u64_le(out, hjson.size());
    out.insert(out.end(), hjson.begin(), hjson.end());
    for (const auto& t : tensors) out.insert(out.end(), t.bytes.begin(), t.bytes.end());
    return out;
}

std::vector<std::uint8_t> write_blob(const std::string& name,
                                     std::span<const std::uint8_t> payload,
                                     const BlobFlags& flags) {
    if (is_delta_codec(flags.codec) && !flags.base)
        throw FormatError("delta blob \"" + name + "\" missing base digest");
    if (!is_delta_codec(flags.codec) && flags.base)
        throw FormatError("non-delta blob \"" + name + "\" carries a base digest");

    json header = json::object();
    json meta = json::object();
    meta["th.codec"] = codec_name(flags.codec);
    if (flags.base) meta["th.base"] = flags.base->hex();
    meta["th.dtype"] = dtype_name(flags.dtype);
    meta["th.shape"] = shape_to_string(flags.shape);
    meta["th.raw_len"] = std::to_string(flags.raw_len);
    header["__metadata__"] = std::move(meta);

    json entry;
    if (flags.codec == CodecId::RAW) {
        entry["dtype"] = dtype_name(flags.dtype);
        entry["shape"] = flags.shape;
    } else {
        entry["dtype"] = "U8";
        entry["shape"] = {payload.size()};
    }
    entry["data_offsets"] = {0, payload.size()};
    header[name] = std::move(entry);

    std::string hjson = header.dump();
    while (hjson.size() % 8 != 0) hjson.push_back(' ');

    std::vector<std::uint8_t> out;
    out.reserve(8 + hjson.size() + payload.size());
    write_u64_le(out, hjson.size());
    out.insert(out.end(), hjson.begin(), hjson.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

BlobContents read_blob(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw FormatError("blob shorter than 8-byte header length");
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (header_len > bytes.size() - 8) throw FormatError("blob header length out of bounds");

    json header;
    try {
        header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const json::exception& e) {
        throw FormatError(std::string("blob header JSON parse failure: ") + e.what());
    }
    if (!header.contains("__metadata__"))
        throw FormatError("blob missing __metadata__ section");
    const auto& meta = header["__metadata__"];
    if (!meta.contains("th.codec")) throw FormatError("blob flags missing th.codec");

    BlobContents out;
    out.flags.codec = codec_from_string(meta["th.codec"].get<std::string>());
    if (meta.contains("th.base"))
        out.flags.base = Digest128::from_hex(meta["th.base"].get<std::string>());
    if (is_delta_codec(out.flags.codec) && !out.flags.base)
        throw FormatError("delta blob missing th.base");
    out.flags.dtype = dtype_from_string(meta["th.dtype"].get<std::string>());
    out.flags.shape = shape_from_string(meta["th.shape"].get<std::string>());
    out.flags.raw_len = std::stoull(meta["th.raw_len"].get<std::string>());

    const std::span<const std::uint8_t> payload = bytes.subspan(8 + header_len);
    bool found = false;
    for (auto& [name, entry] : header.items()) {
        if (name == "__metadata__") continue;
        if (found) throw FormatError("blob contains more than one tensor entry");
        found = true;
        out.name = name;
        const std::uint64_t begin = entry["data_offsets"][0].get<std::uint64_t>();
        const std::uint64_t end = entry["data_offsets"][1].get<std::uint64_t>();
        if (begin > end || end > payload.size())
            throw FormatError("blob \"" + name + "\": data_offsets out of bounds");
        out.payload = payload.subspan(begin, end - begin);
    }
    if (!found) throw FormatError("blob contains no tensor entry");
    return out;
}

}  // namespace tensorhub
