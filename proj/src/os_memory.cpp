#include "tagheap/os_memory.hpp"

#include <fcntl.h>
#include <linux/falloc.h>
#include <linux/memfd.h>
#include <sys/mman.h>
#include <unistd.h>

#include <cerrno>
#include <system_error>

namespace tagheap {

namespace {

[[noreturn]] void throw_errno(const char* what) {
  throw std::system_error(errno, std::generic_category(), what);
}

constexpr std::size_t kHugePageSize = std::size_t{2} << 20;

}  // namespace

std::uintptr_t PosixMemory::reserve(std::size_t len, std::size_t align) {
  // Over-reserve and trim so the surviving range starts on an `align` boundary.
  const std::size_t span = len + align;
  void* p = ::mmap(nullptr, span, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (p == MAP_FAILED) throw_errno("reserve: mmap");
  const auto raw = reinterpret_cast<std::uintptr_t>(p);
  const std::uintptr_t base = (raw + align - 1) & ~(std::uintptr_t{align} - 1);
  if (base > raw) ::munmap(p, base - raw);
  const std::uintptr_t tail = base + len;
  if (raw + span > tail) ::munmap(reinterpret_cast<void*>(tail), raw + span - tail);
  return base;
}

void PosixMemory::release(std::uintptr_t addr, std::size_t len) noexcept {
  ::munmap(reinterpret_cast<void*>(addr), len);
}

int PosixMemory::create_shared_object(std::size_t capacity, bool huge_pages) {
  unsigned flags = MFD_CLOEXEC;
  if (huge_pages) flags |= MFD_HUGETLB | MFD_HUGE_2MB;
  const int fd = ::memfd_create("tagheap", flags);
  if (fd < 0) {
    if (huge_pages) throw HugePagesUnavailable("huge pages unavailable: memfd_create(MFD_HUGETLB) failed");
    throw_errno("memfd_create");
  }
  if (::ftruncate(fd, static_cast<off_t>(capacity)) != 0) {
    const int err = errno;
    ::close(fd);
    if (huge_pages) throw HugePagesUnavailable("huge pages unavailable: cannot size hugetlb object");
    throw std::system_error(err, std::generic_category(), "ftruncate");
  }
  if (huge_pages) {
    // hugetlb objects fault with SIGBUS when the pool is empty; probe one page now.
    if (::fallocate(fd, 0, 0, kHugePageSize) != 0) {
      ::close(fd);
      throw HugePagesUnavailable("huge pages unavailable: the 2 MiB page pool is empty; use --page-size 4k");
    }
    ::fallocate(fd, FALLOC_FL_PUNCH_HOLE | FALLOC_FL_KEEP_SIZE, 0, kHugePageSize);
  }
  return fd;
}

void PosixMemory::destroy_shared_object(int handle) noexcept { ::close(handle); }

void PosixMemory::map_shared(std::uintptr_t addr, std::size_t len, int handle, std::uint64_t offset) {
  void* want = reinterpret_cast<void*>(addr);
  void* got = ::mmap(want, len, PROT_READ | PROT_WRITE, MAP_SHARED | MAP_FIXED, handle,
                     static_cast<off_t>(offset));
  if (got == MAP_FAILED) throw_errno("map_shared: mmap");
}

void PosixMemory::map_no_access(std::uintptr_t addr, std::size_t len) {
  void* got = ::mmap(reinterpret_cast<void*>(addr), len, PROT_NONE,
                     MAP_PRIVATE | MAP_ANONYMOUS | MAP_FIXED | MAP_NORESERVE, -1, 0);
  if (got == MAP_FAILED) throw_errno("map_no_access: mmap");
}

void PosixMemory::discard_shared(int handle, std::uint64_t offset, std::size_t len) {
  if (::fallocate(handle, FALLOC_FL_PUNCH_HOLE | FALLOC_FL_KEEP_SIZE, static_cast<off_t>(offset),
                  static_cast<off_t>(len)) != 0) {
    throw_errno("discard_shared: fallocate");
  }
}

void PosixMemory::commit_private(std::uintptr_t addr, std::size_t len) {
  if (::mprotect(reinterpret_cast<void*>(addr), len, PROT_READ | PROT_WRITE) != 0) {
    throw_errno("commit_private: mprotect");
  }
}

OsMemory& default_os_memory() {
  static PosixMemory instance;
  return instance;
}

}  // namespace tagheap
