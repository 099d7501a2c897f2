#include "tagheap/mtalloc.hpp"

#include <bit>
#include <new>
#include <stdexcept>
#include <string>

namespace tagheap {

std::string_view to_string(TagStrategy::Kind kind) noexcept {
  switch (kind) {
    case TagStrategy::Kind::Fixed:
      return "fixed";
    case TagStrategy::Kind::Random:
      return "random";
    case TagStrategy::Kind::Generational:
      return "generational";
  }
  return "unknown";
}

namespace {

std::uint64_t seed_from(const AllocatorConfig& config) {
  if (config.seed) return *config.seed;
  std::random_device rd;
  return (std::uint64_t{rd()} << 32) ^ rd();
}

}  // namespace

Allocator::Allocator(HeapRegion region, ShadowStore shadow, AllocatorConfig config)
    : region_(std::move(region)), shadow_(std::move(shadow)), config_(config), rng_(seed_from(config)) {
  const PointerLayout& heap = region_.layout();
  const PointerLayout& tags = shadow_.layout();
  if (heap.tag_bits != tags.tag_bits || heap.suffix_bits != tags.suffix_bits ||
      heap.granule_size != tags.granule_size || shadow_.heap_page_size() != region_.page_size()) {
    throw InitError("allocator: heap region and shadow store layouts differ");
  }
  if (config_.strategy.kind == TagStrategy::Kind::Fixed &&
      config_.strategy.fixed_tag.value >= assignable_tag_count(heap)) {
    throw InitError("allocator: fixed tag out of range for layout");
  }
  const unsigned classes = static_cast<unsigned>(std::countr_zero(region_.page_size())) - 3;
  classes_.resize(classes);
  page_class_.reset(new std::atomic<std::uint8_t>[region_.pages_per_alias()]());
}

std::unique_ptr<Allocator> Allocator::create(const PointerLayout& layout, std::uint64_t page_size,
                                             AllocatorConfig config, OsMemory& os) {
  HeapRegion region = HeapRegion::reserve(layout, page_size, os);
  ShadowStore shadow = ShadowStore::reserve(region.layout(), page_size, os);
  return std::make_unique<Allocator>(std::move(region), std::move(shadow), config);
}

std::uint64_t Allocator::slot_size_for(std::size_t size) const {
  if (size > region_.page_size()) {
    throw std::invalid_argument("alloc: " + std::to_string(size) + " bytes exceeds one page");
  }
  return std::bit_ceil(std::max<std::uint64_t>(size, kGranuleSize));
}

unsigned Allocator::class_index(std::uint64_t slot_size) const noexcept {
  return static_cast<unsigned>(std::countr_zero(slot_size)) - 4;
}

Tag Allocator::draw_tag() {
  return Tag{static_cast<std::uint8_t>(rng_() % assignable_tag_count(layout()))};
}

std::optional<std::uint64_t> Allocator::take_slot(PageDescriptor& page) {
  if (!page.free_list.empty()) {
    const std::uint64_t off = *page.free_list.begin();
    page.free_list.erase(page.free_list.begin());
    return off;
  }
  if (page.bump_cursor + page.slot_size <= page.handle.size) {
    const std::uint64_t off = page.bump_cursor;
    page.bump_cursor += page.slot_size;
    return off;
  }
  return std::nullopt;
}

void Allocator::retag_page(PageDescriptor& page) {
  const Tag previous = page.generation_tag;
  Tag next = draw_tag();
  if (config_.exclude_previous_on_retag && assignable_tag_count(layout()) > 1) {
    while (next == previous) next = draw_tag();
  }
  page.generation_tag = next;
  page.free_list.insert(page.deferred.begin(), page.deferred.end());
  page.deferred.clear();
  ++stats_.retag_events;
}

std::uint64_t Allocator::commit_new_page(unsigned cls, std::uint64_t slot_size) {
  std::uint64_t index = next_fresh_page_;
  if (!recycled_pages_.empty()) {
    index = *recycled_pages_.begin();
  } else if (index >= region_.pages_per_alias()) {
    throw std::bad_alloc();
  }

  region_.commit_page(index);
  shadow_.commit_for_page(index);
  if (index == next_fresh_page_) {
    ++next_fresh_page_;
  } else {
    recycled_pages_.erase(index);
  }

  PageDescriptor page;
  page.handle = {index, region_.page_size()};
  page.slot_size = slot_size;
  page.live.assign(region_.page_size() / slot_size, false);
  if (config_.strategy.kind == TagStrategy::Kind::Generational) page.generation_tag = draw_tag();
  pages_.emplace(index, std::move(page));
  page_class_[index].store(static_cast<std::uint8_t>(cls + 1), std::memory_order_release);
  return index;
}

void Allocator::decommit(std::uint64_t page_index) {
  PageDescriptor& page = pages_.at(page_index);
  SizeClass& sc = classes_[class_index(page.slot_size)];
  if (sc.current == page_index) sc.current.reset();
  sc.available.erase(page_index);

  page_class_[page_index].store(0, std::memory_order_release);
  shadow_.release_for_page(page_index);
  region_.decommit_page(page_index);
  pages_.erase(page_index);
  recycled_pages_.insert(page_index);
  ++stats_.page_decommits;
}

TaggedAddress Allocator::alloc(std::size_t size) {
  const std::uint64_t slot_size = slot_size_for(size);
  const unsigned cls = class_index(slot_size);
  const bool generational = config_.strategy.kind == TagStrategy::Kind::Generational;

  std::lock_guard lock(mutex_);
  SizeClass& sc = classes_[cls];
  PageDescriptor* page = nullptr;
  std::optional<std::uint64_t> offset;
  while (!offset) {
    if (sc.current) {
      page = &pages_.at(*sc.current);
      offset = take_slot(*page);
      if (!offset && generational && !page->deferred.empty()) {
        retag_page(*page);
        offset = take_slot(*page);
      }
      if (offset) break;
      sc.current.reset();
    }
    if (!sc.available.empty()) {
      sc.current = *sc.available.begin();
      sc.available.erase(sc.available.begin());
    } else {
      sc.current = commit_new_page(cls, slot_size);
    }
  }

  Tag tag{};
  switch (config_.strategy.kind) {
    case TagStrategy::Kind::Fixed:
      tag = config_.strategy.fixed_tag;
      break;
    case TagStrategy::Kind::Random:
      tag = draw_tag();
      break;
    case TagStrategy::Kind::Generational:
      tag = page->generation_tag;
      break;
  }

  const std::uint64_t suffix = page->handle.page_index * page->handle.size + *offset;
  shadow_.set_range(suffix, slot_size, tag);
  page->live[*offset / slot_size] = true;
  ++page->live_count;
  ++stats_.allocations;
  stats_.bytes_live += slot_size;
  return encode(layout(), suffix, tag);
}

FreeResult Allocator::free(TaggedAddress addr) {
  const PointerLayout& lay = layout();
  if (!is_heap(lay, addr)) throw std::invalid_argument("free: not a heap address");

  const std::uint64_t suffix = suffix_of(lay, addr);
  const std::uint64_t page_index = suffix / region_.page_size();
  const std::uint64_t offset = suffix % region_.page_size();
  FreeResult result{FreeStatus::InvalidFree, addr, decode_tag(lay, addr), shadow_.freed()};

  std::lock_guard lock(mutex_);
  auto it = pages_.find(page_index);
  if (it == pages_.end()) {
    ++stats_.invalid_free_detections;
    return result;
  }
  PageDescriptor& page = it->second;
  result.shadow = shadow_.load(suffix / lay.granule_size);
  if (offset % page.slot_size != 0 || offset >= page.bump_cursor) {
    ++stats_.invalid_free_detections;
    return result;
  }
  if (result.shadow != result.embedded.value) {
    result.status = FreeStatus::DoubleFree;
    ++stats_.double_free_detections;
    return result;
  }
  const std::uint64_t slot = offset / page.slot_size;
  if (!page.live[slot]) {
    ++stats_.invalid_free_detections;
    return result;
  }

  page.live[slot] = false;
  --page.live_count;
  shadow_.poison(suffix, page.slot_size, config_.poison);
  if (config_.strategy.kind == TagStrategy::Kind::Generational) {
    page.deferred.push_back(offset);
  } else {
    page.free_list.insert(offset);
  }
  ++stats_.frees;
  stats_.bytes_live -= page.slot_size;
  epoch_.fetch_add(1, std::memory_order_acq_rel);

  SizeClass& sc = classes_[class_index(page.slot_size)];
  if (sc.current != page_index) sc.available.insert(page_index);
  if (config_.retention == RetentionPolicy::Eager && page.live_count == 0) decommit(page_index);

  result.status = FreeStatus::Ok;
  return result;
}

AllocatorStats Allocator::stats() const {
  std::lock_guard lock(mutex_);
  AllocatorStats out = stats_;
  out.pages_committed = region_.committed_count();
  out.heap_bytes_committed = region_.committed_bytes();
  out.shadow_bytes_committed = shadow_.committed_bytes();
  out.mapping_calls = region_.mapping_calls();
  return out;
}

std::optional<SlotSpan> Allocator::slot_span(TaggedAddress addr) const noexcept {
  const PointerLayout& lay = layout();
  if (!is_heap(lay, addr)) return std::nullopt;
  const std::uint64_t suffix = suffix_of(lay, addr);
  const std::uint8_t cls = page_class_[suffix / region_.page_size()].load(std::memory_order_acquire);
  if (cls == 0) return std::nullopt;
  const std::uint64_t slot_size = kGranuleSize << (cls - 1);
  return SlotSpan{TaggedAddress{lay.prefix_value | (suffix - suffix % slot_size)}, slot_size};
}

std::optional<Tag> Allocator::generation_tag(std::uint64_t page_index) const {
  std::lock_guard lock(mutex_);
  auto it = pages_.find(page_index);
  if (it == pages_.end()) return std::nullopt;
  return it->second.generation_tag;
}

}  // namespace tagheap
