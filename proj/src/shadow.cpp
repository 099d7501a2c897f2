#include "tagheap/shadow.hpp"

#include <stdexcept>
#include <string>
#include <utility>

namespace tagheap {

namespace {

constexpr std::uint64_t kShadowChunk = 4096;

constexpr std::uint64_t round_up(std::uint64_t v, std::uint64_t to) { return (v + to - 1) / to * to; }

}  // namespace

ShadowStore ShadowStore::reserve(const PointerLayout& layout, std::uint64_t heap_page_size, OsMemory& os) {
  validate_layout(layout);
  if (heap_page_size == 0 || heap_page_size % layout.granule_size != 0 ||
      heap_page_size > layout.heap_capacity()) {
    throw std::invalid_argument("shadow: bad heap page size " + std::to_string(heap_page_size));
  }
  const std::uint64_t length = round_up(layout.heap_capacity() / layout.granule_size, kShadowChunk);
  const std::uintptr_t base = os.reserve(length, kShadowChunk);
  return ShadowStore(os, layout, heap_page_size, base, length);
}

ShadowStore::ShadowStore(OsMemory& os, const PointerLayout& layout, std::uint64_t heap_page_size,
                         std::uintptr_t base, std::uint64_t length)
    : os_(&os),
      layout_(layout),
      heap_page_size_(heap_page_size),
      granules_per_page_(heap_page_size / layout.granule_size),
      base_(base),
      length_(length),
      page_count_(layout.heap_capacity() / heap_page_size),
      page_committed_(new std::atomic<std::uint8_t>[page_count_]()),
      chunk_committed_(length / kShadowChunk, false) {}

ShadowStore::ShadowStore(ShadowStore&& other) noexcept { swap(other); }

ShadowStore& ShadowStore::operator=(ShadowStore&& other) noexcept {
  ShadowStore tmp(std::move(other));
  swap(tmp);
  return *this;
}

ShadowStore::~ShadowStore() {
  if (os_ != nullptr && base_ != 0) os_->release(base_, length_);
}

void ShadowStore::swap(ShadowStore& other) noexcept {
  std::swap(os_, other.os_);
  std::swap(layout_, other.layout_);
  std::swap(heap_page_size_, other.heap_page_size_);
  std::swap(granules_per_page_, other.granules_per_page_);
  std::swap(base_, other.base_);
  std::swap(length_, other.length_);
  std::swap(page_count_, other.page_count_);
  page_committed_.swap(other.page_committed_);
  chunk_committed_.swap(other.chunk_committed_);
  std::swap(committed_pages_, other.committed_pages_);
}

void ShadowStore::commit_for_page(std::uint64_t heap_page) {
  if (heap_page >= page_count_) throw std::invalid_argument("shadow: heap page out of range");
  if (is_committed_page(heap_page)) throw std::invalid_argument("shadow: page already committed");

  const std::uint64_t first = heap_page * granules_per_page_;
  const std::uint64_t last = first + granules_per_page_;
  for (std::uint64_t chunk = first / kShadowChunk; chunk * kShadowChunk < last; ++chunk) {
    if (!chunk_committed_[chunk]) {
      os_->commit_private(base_ + chunk * kShadowChunk, kShadowChunk);
      chunk_committed_[chunk] = true;
    }
  }
  fill(first, granules_per_page_, freed());
  page_committed_[heap_page].store(1, std::memory_order_release);
  ++committed_pages_;
}

void ShadowStore::release_for_page(std::uint64_t heap_page) {
  if (!is_committed_page(heap_page)) throw std::invalid_argument("shadow: page not committed");
  page_committed_[heap_page].store(0, std::memory_order_release);
  fill(heap_page * granules_per_page_, granules_per_page_, freed());
  --committed_pages_;
}

void ShadowStore::require_committed(std::uint64_t suffix_start, std::uint64_t len) const {
  if (suffix_start % layout_.granule_size != 0) {
    throw std::invalid_argument("shadow: range start is not granule aligned");
  }
  if (suffix_start + len > layout_.heap_capacity()) throw std::invalid_argument("shadow: range exceeds heap");
  const std::uint64_t end = suffix_start + (len == 0 ? 1 : len);
  for (std::uint64_t page = suffix_start / heap_page_size_; page * heap_page_size_ < end; ++page) {
    if (!is_committed_page(page)) throw std::invalid_argument("shadow: range touches uncommitted shadow");
  }
}

void ShadowStore::fill(std::uint64_t first_granule, std::uint64_t count, std::uint8_t value) {
  std::uint8_t* p = bytes();
  for (std::uint64_t g = first_granule; g < first_granule + count; ++g) {
    std::atomic_ref<std::uint8_t>(p[g]).store(value, std::memory_order_relaxed);
  }
}

void ShadowStore::set_range(std::uint64_t suffix_start, std::uint64_t len, Tag tag) {
  require_committed(suffix_start, len);
  if (tag.value > layout_.tag_mask()) throw std::invalid_argument("shadow: tag out of range");
  const std::uint64_t first = suffix_start / layout_.granule_size;
  const std::uint64_t end = (suffix_start + len + layout_.granule_size - 1) / layout_.granule_size;
  fill(first, end - first, tag.value);
}

void ShadowStore::poison(std::uint64_t suffix_start, std::uint64_t len, PoisonMode mode) {
  require_committed(suffix_start, len);
  const std::uint64_t first = suffix_start / layout_.granule_size;
  if (mode == PoisonMode::FirstGranule) {
    fill(first, 1, freed());
    return;
  }
  const std::uint64_t end = (suffix_start + len + layout_.granule_size - 1) / layout_.granule_size;
  fill(first, end > first ? end - first : 1, freed());
}

std::uint8_t ShadowStore::get(TaggedAddress addr) const { return at(shadow_index(layout_, addr)); }

std::uint8_t ShadowStore::at(std::uint64_t granule) const {
  if (!is_committed_granule(granule)) {
    throw std::invalid_argument("shadow: granule " + std::to_string(granule) + " is not committed");
  }
  return load(granule);
}

}  // namespace tagheap
