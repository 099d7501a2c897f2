// Tagging allocator.
//
// Serves 16-byte aligned allocations out of aliased heap pages, embeds a tag
// in every returned pointer and mirrors it into shadow memory. Frees compare
// the embedded tag with shadow, which turns a second free of the same pointer
// into a deterministic DoubleFree verdict.
//
// Slots come from power-of-two size classes; each committed page serves one
// class. Under the generational strategy all allocations on a page share the
// page's current tag, frees are parked in a deferred set, and the page is
// retagged (deferred slots become reusable) only once it cannot serve another
// allocation.
#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tagheap/ptrfmt.hpp"
#include "tagheap/shadow.hpp"
#include "tagheap/vmem.hpp"

namespace tagheap {

class InitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TagStrategy {
  enum class Kind { Fixed, Random, Generational };

  Kind kind = Kind::Random;
  Tag fixed_tag{};

  static constexpr TagStrategy fixed(Tag tag) noexcept { return {Kind::Fixed, tag}; }
  static constexpr TagStrategy random() noexcept { return {Kind::Random, {}}; }
  static constexpr TagStrategy generational() noexcept { return {Kind::Generational, {}}; }

  friend constexpr bool operator==(const TagStrategy&, const TagStrategy&) = default;
};

std::string_view to_string(TagStrategy::Kind kind) noexcept;

enum class RetentionPolicy { Retain, Eager };

struct AllocatorConfig {
  TagStrategy strategy = TagStrategy::random();
  PoisonMode poison = PoisonMode::FirstGranule;
  RetentionPolicy retention = RetentionPolicy::Retain;
  // Unset: seed from std::random_device.
  std::optional<std::uint64_t> seed;
  // Redraw a retagged page's tag until it differs from the previous one.
  bool exclude_previous_on_retag = false;
};

struct AllocatorStats {
  std::uint64_t allocations = 0;
  std::uint64_t frees = 0;
  std::uint64_t double_free_detections = 0;
  std::uint64_t invalid_free_detections = 0;
  std::uint64_t retag_events = 0;
  std::uint64_t pages_committed = 0;
  std::uint64_t page_decommits = 0;
  std::uint64_t bytes_live = 0;
  std::uint64_t heap_bytes_committed = 0;
  std::uint64_t shadow_bytes_committed = 0;
  std::uint64_t mapping_calls = 0;
};

struct FreeEpoch {
  std::uint64_t value = 0;

  friend constexpr bool operator==(FreeEpoch, FreeEpoch) = default;
};

enum class FreeStatus { Ok, DoubleFree, InvalidFree };

struct FreeResult {
  FreeStatus status = FreeStatus::Ok;
  TaggedAddress addr{};
  Tag embedded{};
  std::uint8_t shadow = 0;

  bool ok() const noexcept { return status == FreeStatus::Ok; }
};

// The byte range of the slot that contains an address, in canonical (tag 0) form.
struct SlotSpan {
  TaggedAddress start{};
  std::uint64_t length = 0;
};

class Allocator {
 public:
  Allocator(HeapRegion region, ShadowStore shadow, AllocatorConfig config);

  // Reserves a region and its shadow for `layout` and wraps them.
  static std::unique_ptr<Allocator> create(const PointerLayout& layout, std::uint64_t page_size,
                                           AllocatorConfig config, OsMemory& os = default_os_memory());

  Allocator(const Allocator&) = delete;
  Allocator& operator=(const Allocator&) = delete;

  // Throws std::bad_alloc when the heap is exhausted and std::invalid_argument
  // for sizes above one page. Size 0 is served as one granule.
  TaggedAddress alloc(std::size_t size);
  // Throws std::invalid_argument for non-heap addresses; every other bad free
  // is reported through the result.
  FreeResult free(TaggedAddress addr);

  AllocatorStats stats() const;
  FreeEpoch current_epoch() const noexcept { return {epoch_.load(std::memory_order_acquire)}; }

  const AllocatorConfig& config() const noexcept { return config_; }
  const PointerLayout& layout() const noexcept { return region_.layout(); }
  const HeapRegion& region() const noexcept { return region_; }
  const ShadowStore& shadow() const noexcept { return shadow_; }
  std::uint64_t page_size() const noexcept { return region_.page_size(); }

  // Anchors for instrumentation: start of the tagged region and of shadow.
  std::uint64_t heap_base() const noexcept { return region_.base(); }
  std::uintptr_t shadow_base() const noexcept { return shadow_.base(); }

  // Lock-free slot lookup; nullopt for non-heap or uncommitted addresses.
  std::optional<SlotSpan> slot_span(TaggedAddress addr) const noexcept;

  std::uint64_t slot_size_for(std::size_t size) const;

  // Current generation tag of a committed page (generational strategy).
  std::optional<Tag> generation_tag(std::uint64_t page_index) const;

 private:
  struct PageDescriptor {
    PageHandle handle{};
    Tag generation_tag{};
    std::uint64_t slot_size = 0;
    std::uint64_t bump_cursor = 0;
    std::set<std::uint64_t> free_list;
    std::vector<std::uint64_t> deferred;
    std::vector<bool> live;
    std::uint64_t live_count = 0;
  };

  struct SizeClass {
    std::optional<std::uint64_t> current;
    std::set<std::uint64_t> available;
  };

  unsigned class_index(std::uint64_t slot_size) const noexcept;
  Tag draw_tag();
  std::optional<std::uint64_t> take_slot(PageDescriptor& page);
  void retag_page(PageDescriptor& page);
  std::uint64_t commit_new_page(unsigned cls, std::uint64_t slot_size);
  void decommit(std::uint64_t page_index);

  HeapRegion region_;
  ShadowStore shadow_;
  AllocatorConfig config_;
  std::mt19937_64 rng_;

  mutable std::mutex mutex_;
  std::atomic<std::uint64_t> epoch_{0};
  std::unordered_map<std::uint64_t, PageDescriptor> pages_;
  std::vector<SizeClass> classes_;
  std::uint64_t next_fresh_page_ = 0;
  std::set<std::uint64_t> recycled_pages_;
  // Per heap page: 0 when uncommitted, else size-class index + 1.
  std::unique_ptr<std::atomic<std::uint8_t>[]> page_class_;
  AllocatorStats stats_;
};

}  // namespace tagheap
