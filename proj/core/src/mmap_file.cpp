#include "tensorhub/mmap_file.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "tensorhub/errors.hpp"

namespace tensorhub {

MappedFile::MappedFile(const std::string& path) {
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0)
        throw StoreError("open " + path + ": " + std::strerror(errno));

    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw StoreError("stat " + path + ": " + std::strerror(errno));
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ == 0) {
        // mmap rejects zero-length maps; an empty file is a valid input.
        ::close(fd);
        addr_ = nullptr;
        return;
    }
    addr_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
    ::close(fd);
    if (addr_ == MAP_FAILED) {
        addr_ = nullptr;
        size_ = 0;
        throw StoreError("mmap " + path + ": " + std::strerror(errno));
    }
    ::madvise(addr_, size_, MADV_SEQUENTIAL);
}

MappedFile::~MappedFile() {
    if (addr_) ::munmap(addr_, size_);
}

MappedFile::MappedFile(MappedFile&& other) noexcept
    : addr_(std::exchange(other.addr_, nullptr)),
      size_(std::exchange(other.size_, 0)) {}

MappedFile& MappedFile::operator=(MappedFile&& other) noexcept {
    if (this != &other) {
        if (addr_) ::munmap(addr_, size_);
        addr_ = std::exchange(other.addr_, nullptr);
        size_ = std::exchange(other.size_, 0);
    }
    return *this;
}

}  // namespace tensorhub
