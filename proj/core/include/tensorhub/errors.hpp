#pragma once

#include <stdexcept>
#include <string>

namespace tensorhub {

// Base class for all engine errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent file contents (safetensors headers, blob
// containers, sketch files).
struct FormatError : Error {
    using Error::Error;
};

// Codec-level failures: corrupt chunk tables, backend failures, codec id
// mismatches.
struct CodecError : Error {
    using Error::Error;
};

// Requested model / tensor does not exist.
struct NotFoundError : Error {
    using Error::Error;
};

// Decoded bytes do not match the recorded digest, or a delta references a
// base whose digest does not match.
struct IntegrityError : Error {
    using Error::Error;
};

// Metadata / blob store failures (I/O, SQL, config mismatches).
struct StoreError : Error {
    using Error::Error;
};

}  // namespace tensorhub
