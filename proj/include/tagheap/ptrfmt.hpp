// Tagged heap-pointer format.
//
// A managed heap pointer is laid out as
//
//   63 ........ T+S | T+S-1 ..... S | S-1 ........ 0
//        prefix     |      tag      |     suffix
//
// The prefix identifies the reserved heap region, the tag is the lock-and-key
// value of the allocation, and the suffix is the byte offset into the heap.
// All functions here are pure bit manipulation over an immutable layout.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tagheap {

inline constexpr std::uint64_t kGranuleSize = 16;
inline constexpr unsigned kMaxTagBits = 8;
inline constexpr unsigned kMaxAddressBits = 47;

struct Tag {
  std::uint8_t value = 0;

  friend constexpr bool operator==(Tag, Tag) = default;
};

struct TaggedAddress {
  std::uint64_t raw = 0;

  friend constexpr bool operator==(TaggedAddress, TaggedAddress) = default;

  template <class T = std::byte>
  T* as() const noexcept {
    return reinterpret_cast<T*>(static_cast<std::uintptr_t>(raw));
  }
};

enum class AddressClass { Heap, NonHeap };

struct PointerLayout {
  unsigned tag_bits = 4;
  unsigned suffix_bits = 34;
  std::uint64_t prefix_value = 0;
  std::uint64_t granule_size = kGranuleSize;

  constexpr unsigned prefix_shift() const noexcept { return tag_bits + suffix_bits; }
  constexpr std::uint64_t suffix_mask() const noexcept { return (std::uint64_t{1} << suffix_bits) - 1; }
  constexpr std::uint64_t tag_mask() const noexcept { return (std::uint64_t{1} << tag_bits) - 1; }
  constexpr std::uint64_t tag_count() const noexcept { return std::uint64_t{1} << tag_bits; }
  // Bytes addressable through one alias (2^S).
  constexpr std::uint64_t heap_capacity() const noexcept { return std::uint64_t{1} << suffix_bits; }
  // Bytes spanned by all aliases together (2^(T+S)).
  constexpr std::uint64_t region_size() const noexcept { return std::uint64_t{1} << prefix_shift(); }

  friend constexpr bool operator==(const PointerLayout&, const PointerLayout&) = default;
};

// Number of tag values the allocator may hand out. With 8-bit tags the value
// 0xFF doubles as the FREED shadow sentinel and is never assigned.
constexpr std::uint64_t assignable_tag_count(const PointerLayout& layout) noexcept {
  return layout.tag_bits == kMaxTagBits ? 255 : layout.tag_count();
}

// Throws std::invalid_argument when the layout breaks one of its invariants.
inline void validate_layout(const PointerLayout& layout) {
  if (layout.tag_bits == 0 || layout.tag_bits > kMaxTagBits) {
    throw std::invalid_argument("tag_bits must be in [1, 8], got " + std::to_string(layout.tag_bits));
  }
  if (layout.suffix_bits < 16) {
    throw std::invalid_argument("suffix_bits must be at least 16, got " + std::to_string(layout.suffix_bits));
  }
  if (layout.prefix_shift() > kMaxAddressBits) {
    throw std::invalid_argument("tag_bits + suffix_bits must not exceed 47");
  }
  if ((layout.prefix_value & (layout.region_size() - 1)) != 0) {
    throw std::invalid_argument("prefix_value has non-zero bits below tag_bits + suffix_bits");
  }
  if (layout.granule_size == 0 || (layout.granule_size & (layout.granule_size - 1)) != 0) {
    throw std::invalid_argument("granule_size must be a power of two");
  }
}

inline PointerLayout make_layout(unsigned tag_bits, unsigned suffix_bits, std::uint64_t prefix_value = 0) {
  PointerLayout layout{tag_bits, suffix_bits, prefix_value, kGranuleSize};
  validate_layout(layout);
  return layout;
}

constexpr TaggedAddress encode(const PointerLayout& layout, std::uint64_t suffix, Tag tag) {
  if (suffix > layout.suffix_mask()) throw std::invalid_argument("suffix out of range for layout");
  if (tag.value > layout.tag_mask()) throw std::invalid_argument("tag out of range for layout");
  return {layout.prefix_value | (std::uint64_t{tag.value} << layout.suffix_bits) | suffix};
}

constexpr Tag decode_tag(const PointerLayout& layout, TaggedAddress addr) noexcept {
  return {static_cast<std::uint8_t>((addr.raw >> layout.suffix_bits) & layout.tag_mask())};
}

constexpr AddressClass classify(const PointerLayout& layout, TaggedAddress addr) noexcept {
  return ((addr.raw ^ layout.prefix_value) >> layout.prefix_shift()) == 0 ? AddressClass::Heap
                                                                          : AddressClass::NonHeap;
}

constexpr bool is_heap(const PointerLayout& layout, TaggedAddress addr) noexcept {
  return classify(layout, addr) == AddressClass::Heap;
}

constexpr std::uint64_t suffix_of(const PointerLayout& layout, TaggedAddress addr) noexcept {
  return addr.raw & layout.suffix_mask();
}

constexpr TaggedAddress canonicalize(const PointerLayout& layout, TaggedAddress addr) {
  if (!is_heap(layout, addr)) throw std::invalid_argument("canonicalize: not a heap address");
  return {addr.raw & ~(layout.tag_mask() << layout.suffix_bits)};
}

constexpr TaggedAddress with_tag(const PointerLayout& layout, TaggedAddress addr, Tag tag) {
  return encode(layout, suffix_of(layout, canonicalize(layout, addr)), tag);
}

constexpr std::uint64_t shadow_index(const PointerLayout& layout, TaggedAddress addr) {
  if (!is_heap(layout, addr)) throw std::invalid_argument("shadow_index: not a heap address");
  return suffix_of(layout, addr) / layout.granule_size;
}

}  // namespace tagheap
