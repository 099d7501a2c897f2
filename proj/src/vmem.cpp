#include "tagheap/vmem.hpp"

#include <stdexcept>
#include <string>
#include <utility>

namespace tagheap {

HeapRegion HeapRegion::reserve(PointerLayout layout, std::uint64_t page_size, OsMemory& os) {
  layout.prefix_value = 0;
  validate_layout(layout);
  if (page_size != kSmallPage && page_size != kHugePage) {
    throw std::invalid_argument("page_size must be 4 KiB or 2 MiB, got " + std::to_string(page_size));
  }
  if (layout.heap_capacity() < page_size) {
    throw std::invalid_argument("suffix_bits too small for one page");
  }

  const int backing = os.create_shared_object(layout.heap_capacity(), page_size == kHugePage);
  std::uintptr_t base = 0;
  try {
    base = os.reserve(layout.region_size(), layout.region_size());
  } catch (...) {
    os.destroy_shared_object(backing);
    throw;
  }
  layout.prefix_value = base;
  return HeapRegion(os, layout, page_size, backing);
}

HeapRegion::HeapRegion(OsMemory& os, PointerLayout layout, std::uint64_t page_size, int backing)
    : os_(&os),
      layout_(layout),
      page_size_(page_size),
      backing_(backing),
      committed_(layout.heap_capacity() / page_size, false) {}

HeapRegion::HeapRegion(HeapRegion&& other) noexcept
    : os_(other.os_),
      layout_(other.layout_),
      page_size_(other.page_size_),
      backing_(std::exchange(other.backing_, -1)),
      committed_(std::move(other.committed_)),
      committed_count_(other.committed_count_),
      mapping_calls_(other.mapping_calls_) {}

HeapRegion& HeapRegion::operator=(HeapRegion&& other) noexcept {
  HeapRegion tmp(std::move(other));
  swap(tmp);
  return *this;
}

void HeapRegion::swap(HeapRegion& other) noexcept {
  std::swap(os_, other.os_);
  std::swap(layout_, other.layout_);
  std::swap(page_size_, other.page_size_);
  std::swap(backing_, other.backing_);
  committed_.swap(other.committed_);
  std::swap(committed_count_, other.committed_count_);
  std::swap(mapping_calls_, other.mapping_calls_);
}

HeapRegion::~HeapRegion() {
  if (backing_ < 0) return;
  os_->release(layout_.prefix_value, layout_.region_size());
  os_->destroy_shared_object(backing_);
}

void HeapRegion::check_index(std::uint64_t page_index) const {
  if (page_index >= committed_.size()) {
    throw std::invalid_argument("page index " + std::to_string(page_index) + " outside the heap");
  }
}

PageHandle HeapRegion::commit_page(std::uint64_t page_index) {
  check_index(page_index);
  if (committed_[page_index]) {
    throw std::invalid_argument("page " + std::to_string(page_index) + " already committed");
  }
  const std::uint64_t offset = page_index * page_size_;
  for (std::uint64_t t = 0; t < layout_.tag_count(); ++t) {
    const std::uint64_t alias = layout_.prefix_value | (t << layout_.suffix_bits) | offset;
    os_->map_shared(alias, page_size_, backing_, offset);
    ++mapping_calls_;
  }
  committed_[page_index] = true;
  ++committed_count_;
  return {page_index, page_size_};
}

void HeapRegion::decommit_page(std::uint64_t page_index) {
  check_index(page_index);
  if (!committed_[page_index]) {
    throw std::invalid_argument("page " + std::to_string(page_index) + " is not committed");
  }
  const std::uint64_t offset = page_index * page_size_;
  for (std::uint64_t t = 0; t < layout_.tag_count(); ++t) {
    os_->map_no_access(layout_.prefix_value | (t << layout_.suffix_bits) | offset, page_size_);
  }
  os_->discard_shared(backing_, offset, page_size_);
  committed_[page_index] = false;
  --committed_count_;
}

std::vector<TaggedAddress> HeapRegion::alias_addresses(TaggedAddress addr) const {
  if (!is_heap(layout_, addr)) throw std::invalid_argument("alias_addresses: not a heap address");
  const std::uint64_t suffix = suffix_of(layout_, addr);
  std::vector<TaggedAddress> out;
  out.reserve(layout_.tag_count());
  for (std::uint64_t t = 0; t < layout_.tag_count(); ++t) {
    out.push_back(encode(layout_, suffix, Tag{static_cast<std::uint8_t>(t)}));
  }
  return out;
}

}  // namespace tagheap
