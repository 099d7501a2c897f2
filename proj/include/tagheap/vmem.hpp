// Heap region reservation and aliased page mapping.
//
// The region spans 2^(T+S) bytes. Alias t of heap offset x lives at
// base + t*2^S + x, and every alias of a committed page maps the same offset
// of one shared memory object, so writes through any tag are visible through
// all of them.
#pragma once

#include <cstdint>
#include <vector>

#include "tagheap/os_memory.hpp"
#include "tagheap/ptrfmt.hpp"

namespace tagheap {

inline constexpr std::uint64_t kSmallPage = std::uint64_t{4} << 10;
inline constexpr std::uint64_t kHugePage = std::uint64_t{2} << 20;

struct PageHandle {
  std::uint64_t page_index = 0;
  std::uint64_t size = 0;
};

class HeapRegion {
 public:
  // The prefix of `layout` is ignored; the returned region's layout carries
  // the prefix chosen by the OS. Throws HugePagesUnavailable when 2 MiB pages
  // are requested but the host cannot provide them.
  static HeapRegion reserve(PointerLayout layout, std::uint64_t page_size,
                            OsMemory& os = default_os_memory());

  HeapRegion(HeapRegion&& other) noexcept;
  HeapRegion& operator=(HeapRegion&& other) noexcept;
  HeapRegion(const HeapRegion&) = delete;
  HeapRegion& operator=(const HeapRegion&) = delete;
  ~HeapRegion();

  const PointerLayout& layout() const noexcept { return layout_; }
  std::uint64_t base() const noexcept { return layout_.prefix_value; }
  std::uint64_t reservation_length() const noexcept { return layout_.region_size(); }
  std::uint64_t page_size() const noexcept { return page_size_; }
  std::uint64_t pages_per_alias() const noexcept { return layout_.heap_capacity() / page_size_; }

  PageHandle commit_page(std::uint64_t page_index);
  void decommit_page(std::uint64_t page_index);

  bool is_committed(std::uint64_t page_index) const noexcept {
    return page_index < committed_.size() && committed_[page_index];
  }
  std::uint64_t committed_count() const noexcept { return committed_count_; }
  std::uint64_t committed_bytes() const noexcept { return committed_count_ * page_size_; }
  // map_shared calls issued by commit_page over the region's lifetime.
  std::uint64_t mapping_calls() const noexcept { return mapping_calls_; }

  // Every tag variant of `addr`, ordered by tag value.
  std::vector<TaggedAddress> alias_addresses(TaggedAddress addr) const;

 private:
  HeapRegion(OsMemory& os, PointerLayout layout, std::uint64_t page_size, int backing);
  void check_index(std::uint64_t page_index) const;
  void swap(HeapRegion& other) noexcept;

  OsMemory* os_ = nullptr;
  PointerLayout layout_{};
  std::uint64_t page_size_ = 0;
  int backing_ = -1;
  std::vector<bool> committed_;
  std::uint64_t committed_count_ = 0;
  std::uint64_t mapping_calls_ = 0;
};

}  // namespace tagheap
