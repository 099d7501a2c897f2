// Thin seam over the platform's virtual-memory calls.
//
// HeapRegion and ShadowStore talk to the OS only through OsMemory, so tests
// can wrap the real implementation in CountingMemory and observe exactly which
// calls an operation issues.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>

namespace tagheap {

class HugePagesUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OsMemory {
 public:
  virtual ~OsMemory() = default;

  // Reserves `len` bytes aligned to `align` with no access permissions.
  virtual std::uintptr_t reserve(std::size_t len, std::size_t align) = 0;
  virtual void release(std::uintptr_t addr, std::size_t len) noexcept = 0;

  // Shared anonymous memory object, sized but not committed.
  virtual int create_shared_object(std::size_t capacity, bool huge_pages) = 0;
  virtual void destroy_shared_object(int handle) noexcept = 0;

  // Maps object bytes [offset, offset+len) read-write at exactly `addr`.
  virtual void map_shared(std::uintptr_t addr, std::size_t len, int handle, std::uint64_t offset) = 0;
  // Returns [addr, addr+len) to the reserved no-access state.
  virtual void map_no_access(std::uintptr_t addr, std::size_t len) = 0;
  // Releases physical backing of object bytes; later reads see zeros.
  virtual void discard_shared(int handle, std::uint64_t offset, std::size_t len) = 0;

  // Makes reserved private memory read-write.
  virtual void commit_private(std::uintptr_t addr, std::size_t len) = 0;
};

class PosixMemory final : public OsMemory {
 public:
  std::uintptr_t reserve(std::size_t len, std::size_t align) override;
  void release(std::uintptr_t addr, std::size_t len) noexcept override;
  int create_shared_object(std::size_t capacity, bool huge_pages) override;
  void destroy_shared_object(int handle) noexcept override;
  void map_shared(std::uintptr_t addr, std::size_t len, int handle, std::uint64_t offset) override;
  void map_no_access(std::uintptr_t addr, std::size_t len) override;
  void discard_shared(int handle, std::uint64_t offset, std::size_t len) override;
  void commit_private(std::uintptr_t addr, std::size_t len) override;
};

// Process-wide PosixMemory instance.
OsMemory& default_os_memory();

struct OsCallCounts {
  std::uint64_t reserve = 0;
  std::uint64_t release = 0;
  std::uint64_t create_shared_object = 0;
  std::uint64_t map_shared = 0;
  std::uint64_t map_no_access = 0;
  std::uint64_t discard_shared = 0;
  std::uint64_t commit_private = 0;
};

// Forwards to another OsMemory and counts every call.
class CountingMemory final : public OsMemory {
 public:
  explicit CountingMemory(OsMemory& inner = default_os_memory()) : inner_(&inner) {}

  const OsCallCounts& counts() const noexcept { return counts_; }
  void reset() noexcept { counts_ = {}; }

  std::uintptr_t reserve(std::size_t len, std::size_t align) override {
    ++counts_.reserve;
    return inner_->reserve(len, align);
  }
  void release(std::uintptr_t addr, std::size_t len) noexcept override {
    ++counts_.release;
    inner_->release(addr, len);
  }
  int create_shared_object(std::size_t capacity, bool huge_pages) override {
    ++counts_.create_shared_object;
    return inner_->create_shared_object(capacity, huge_pages);
  }
  void destroy_shared_object(int handle) noexcept override { inner_->destroy_shared_object(handle); }
  void map_shared(std::uintptr_t addr, std::size_t len, int handle, std::uint64_t offset) override {
    ++counts_.map_shared;
    inner_->map_shared(addr, len, handle, offset);
  }
  void map_no_access(std::uintptr_t addr, std::size_t len) override {
    ++counts_.map_no_access;
    inner_->map_no_access(addr, len);
  }
  void discard_shared(int handle, std::uint64_t offset, std::size_t len) override {
    ++counts_.discard_shared;
    inner_->discard_shared(handle, offset, len);
  }
  void commit_private(std::uintptr_t addr, std::size_t len) override {
    ++counts_.commit_private;
    inner_->commit_private(addr, len);
  }

 private:
  OsMemory* inner_;
  OsCallCounts counts_;
};

}  // namespace tagheap
