#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace tensorhub {

// Read-only memory-mapped file. Movable, not copyable.
class MappedFile {
  public:
    MappedFile() = default;
    explicit MappedFile(const std::string& path);
    ~MappedFile();

    MappedFile(MappedFile&& other) noexcept;
    MappedFile& operator=(MappedFile&& other) noexcept;
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    std::span<const std::uint8_t> data() const {
        return {static_cast<const std::uint8_t*>(addr_), size_};
    }
    std::size_t size() const { return size_; }

  private:
    void* addr_ = nullptr;
    std::size_t size_ = 0;
};

}  // namespace tensorhub
