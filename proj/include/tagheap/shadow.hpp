// Shadow tag store: one byte per 16-byte heap granule.
//
// Shadow byte k describes heap suffix bytes [16k, 16k+16) regardless of which
// tag alias is used to reach them. The store lives in its own reservation and
// is committed alongside heap pages. Bytes are written and read through
// std::atomic_ref so a racing reader sees either the old or the new value.
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

#include "tagheap/os_memory.hpp"
#include "tagheap/ptrfmt.hpp"

namespace tagheap {

// Written over the first granule of a freed allocation. Never a valid tag:
// 0xF0 lies above every tag for T < 8, and 0xFF is withheld from 8-bit tags.
constexpr std::uint8_t freed_sentinel(const PointerLayout& layout) noexcept {
  return layout.tag_bits == kMaxTagBits ? 0xFF : 0xF0;
}

enum class PoisonMode { FirstGranule, WholeAllocation };

class ShadowStore {
 public:
  static ShadowStore reserve(const PointerLayout& layout, std::uint64_t heap_page_size,
                             OsMemory& os = default_os_memory());

  ShadowStore(ShadowStore&& other) noexcept;
  ShadowStore& operator=(ShadowStore&& other) noexcept;
  ShadowStore(const ShadowStore&) = delete;
  ShadowStore& operator=(const ShadowStore&) = delete;
  ~ShadowStore();

  const PointerLayout& layout() const noexcept { return layout_; }
  std::uint64_t heap_page_size() const noexcept { return heap_page_size_; }
  std::uintptr_t base() const noexcept { return base_; }
  std::uint8_t freed() const noexcept { return freed_sentinel(layout_); }

  // Commits the shadow bytes of one heap page and fills them with FREED.
  void commit_for_page(std::uint64_t heap_page);
  // Fills the page's shadow with FREED and marks it uncommitted. The physical
  // shadow chunk stays mapped; only the accounting shrinks.
  void release_for_page(std::uint64_t heap_page);

  bool is_committed_page(std::uint64_t heap_page) const noexcept {
    return heap_page < page_count_ && page_committed_[heap_page].load(std::memory_order_acquire) != 0;
  }
  bool is_committed_granule(std::uint64_t granule) const noexcept {
    return is_committed_page(granule / granules_per_page_);
  }
  std::uint64_t committed_pages() const noexcept { return committed_pages_; }
  std::uint64_t committed_bytes() const noexcept { return committed_pages_ * granules_per_page_; }

  void set_range(std::uint64_t suffix_start, std::uint64_t len, Tag tag);
  void poison(std::uint64_t suffix_start, std::uint64_t len, PoisonMode mode);

  // Checked lookup; throws std::invalid_argument for non-heap addresses and
  // uncommitted shadow.
  std::uint8_t get(TaggedAddress addr) const;
  std::uint8_t at(std::uint64_t granule) const;

  // Unchecked lookup for callers that already know the granule is committed.
  std::uint8_t load(std::uint64_t granule) const noexcept {
    return std::atomic_ref<std::uint8_t>(bytes()[granule]).load(std::memory_order_relaxed);
  }

 private:
  ShadowStore(OsMemory& os, const PointerLayout& layout, std::uint64_t heap_page_size,
              std::uintptr_t base, std::uint64_t length);
  std::uint8_t* bytes() const noexcept { return reinterpret_cast<std::uint8_t*>(base_); }
  void fill(std::uint64_t first_granule, std::uint64_t count, std::uint8_t value);
  void require_committed(std::uint64_t suffix_start, std::uint64_t len) const;
  void swap(ShadowStore& other) noexcept;

  OsMemory* os_ = nullptr;
  PointerLayout layout_{};
  std::uint64_t heap_page_size_ = 0;
  std::uint64_t granules_per_page_ = 0;
  std::uintptr_t base_ = 0;
  std::uint64_t length_ = 0;
  std::uint64_t page_count_ = 0;
  std::unique_ptr<std::atomic<std::uint8_t>[]> page_committed_;
  std::vector<bool> chunk_committed_;
  std::uint64_t committed_pages_ = 0;
};

}  // namespace tagheap
