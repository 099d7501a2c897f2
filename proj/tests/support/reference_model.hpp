// Naive executable model of the tagging allocator and checker.
//
// Everything is flat arrays and linear scans: one state byte per slot, one
// shadow byte per granule, no free lists or page sets. It follows the same
// published policy (lowest free slot first, then the bump frontier; current
// page, then the lowest-index page with reclaimable slots, then the lowest
// uncommitted page) and consumes the same seeded random stream, so its
// outputs must match the real allocator byte for byte.
#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tagheap/ptrfmt.hpp"

namespace tagheap::testing {

class ReferenceModel {
 public:
  enum class Strategy { Fixed, Random, Generational };
  enum class Verdict { Ok, DoubleFree, InvalidFree, HeapOk, NonHeapOk, Uaf };

  struct Options {
    PointerLayout layout;
    std::uint64_t page_size = 4096;
    Strategy strategy = Strategy::Random;
    std::uint8_t fixed_tag = 0;
    bool whole_poison = false;
    bool eager = false;
    std::uint64_t seed = 1;
  };

  explicit ReferenceModel(const Options& o)
      : o_(o),
        rng_(o.seed),
        page_count_(o.layout.heap_capacity() / o.page_size),
        granules_per_page_(o.page_size / 16),
        freed_(o.layout.tag_bits == 8 ? 0xFF : 0xF0),
        tag_space_(o.layout.tag_bits == 8 ? 255 : (1u << o.layout.tag_bits)),
        shadow_(o.layout.heap_capacity() / 16, 0),
        pages_(page_count_) {
    for (std::uint64_t s = 16; s <= o.page_size; s *= 2) current_.push_back(-1);
  }

  std::uint8_t freed() const { return freed_; }
  bool page_committed(std::uint64_t page) const { return pages_[page].committed; }
  std::uint64_t page_count() const { return page_count_; }
  std::uint8_t shadow(std::uint64_t granule) const { return shadow_[granule]; }

  std::uint64_t alloc(std::uint64_t size) {
    const std::uint64_t slot = std::bit_ceil(size < 16 ? std::uint64_t{16} : size);
    const unsigned cls = static_cast<unsigned>(std::countr_zero(slot)) - 4;
    std::int64_t chosen_slot = -1;
    std::uint64_t page_index = 0;
    for (;;) {
      if (current_[cls] >= 0) {
        page_index = static_cast<std::uint64_t>(current_[cls]);
        Page& p = pages_[page_index];
        chosen_slot = pick(p);
        if (chosen_slot < 0 && o_.strategy == Strategy::Generational && count(p, Deferred) > 0) {
          p.gen_tag = draw();
          for (auto& st : p.state) {
            if (st == Deferred) st = Reusable;
          }
          chosen_slot = pick(p);
        }
        if (chosen_slot >= 0) break;
        current_[cls] = -1;
      }
      std::int64_t next = -1;
      for (std::uint64_t i = 0; i < page_count_; ++i) {
        const Page& p = pages_[i];
        if (p.committed && p.slot_size == slot && (count(p, Reusable) > 0 || count(p, Deferred) > 0)) {
          next = static_cast<std::int64_t>(i);
          break;
        }
      }
      if (next < 0) next = commit(slot);
      current_[cls] = next;
    }

    Page& p = pages_[page_index];
    std::uint8_t tag = 0;
    if (o_.strategy == Strategy::Fixed) tag = o_.fixed_tag;
    if (o_.strategy == Strategy::Random) tag = draw();
    if (o_.strategy == Strategy::Generational) tag = p.gen_tag;
    p.state[static_cast<std::size_t>(chosen_slot)] = Live;
    const std::uint64_t suffix = page_index * o_.page_size + static_cast<std::uint64_t>(chosen_slot) * slot;
    for (std::uint64_t g = suffix / 16; g < (suffix + slot) / 16; ++g) shadow_[g] = tag;
    return o_.layout.prefix_value | (std::uint64_t{tag} << o_.layout.suffix_bits) | suffix;
  }

  Verdict free(std::uint64_t raw) {
    const std::uint64_t suffix = raw & o_.layout.suffix_mask();
    const std::uint8_t tag = static_cast<std::uint8_t>((raw >> o_.layout.suffix_bits) & o_.layout.tag_mask());
    const std::uint64_t page_index = suffix / o_.page_size;
    Page& p = pages_[page_index];
    if (!p.committed) return Verdict::InvalidFree;
    const std::uint64_t offset = suffix % o_.page_size;
    if (offset % p.slot_size != 0) return Verdict::InvalidFree;
    const std::uint64_t slot = offset / p.slot_size;
    if (p.state[slot] == Fresh) return Verdict::InvalidFree;
    if (shadow_[suffix / 16] != tag) return Verdict::DoubleFree;
    if (p.state[slot] != Live) return Verdict::InvalidFree;

    p.state[slot] = o_.strategy == Strategy::Generational ? Deferred : Reusable;
    const std::uint64_t last = o_.whole_poison ? (suffix + p.slot_size) / 16 : suffix / 16 + 1;
    for (std::uint64_t g = suffix / 16; g < last; ++g) shadow_[g] = freed_;
    if (o_.eager && count(p, Live) == 0) {
      for (auto& c : current_) {
        if (c == static_cast<std::int64_t>(page_index)) c = -1;
      }
      p = Page{};
      for (std::uint64_t g = 0; g < granules_per_page_; ++g) shadow_[page_index * granules_per_page_ + g] = freed_;
    }
    return Verdict::Ok;
  }

  // Mirrors the checker predicate directly from the pseudo-code form.
  Verdict check(std::uint64_t raw) const {
    if (((raw ^ o_.layout.prefix_value) >> o_.layout.prefix_shift()) != 0) return Verdict::NonHeapOk;
    const std::uint64_t suffix = raw & o_.layout.suffix_mask();
    if (!pages_[suffix / o_.page_size].committed) return Verdict::Uaf;
    const std::uint8_t tag = static_cast<std::uint8_t>((raw >> o_.layout.suffix_bits) & o_.layout.tag_mask());
    return shadow_[suffix / 16] == tag ? Verdict::HeapOk : Verdict::Uaf;
  }

 private:
  enum SlotState : std::uint8_t { Fresh, Live, Reusable, Deferred };

  struct Page {
    bool committed = false;
    std::uint64_t slot_size = 0;
    std::uint8_t gen_tag = 0;
    std::vector<SlotState> state;
  };

  std::uint8_t draw() { return static_cast<std::uint8_t>(rng_() % tag_space_); }

  static std::size_t count(const Page& p, SlotState s) {
    std::size_t n = 0;
    for (auto st : p.state) n += st == s;
    return n;
  }

  static std::int64_t pick(const Page& p) {
    for (std::size_t i = 0; i < p.state.size(); ++i) {
      if (p.state[i] == Reusable) return static_cast<std::int64_t>(i);
    }
    for (std::size_t i = 0; i < p.state.size(); ++i) {
      if (p.state[i] == Fresh) return static_cast<std::int64_t>(i);
    }
    return -1;
  }

  std::int64_t commit(std::uint64_t slot) {
    for (std::uint64_t i = 0; i < page_count_; ++i) {
      if (pages_[i].committed) continue;
      Page& p = pages_[i];
      p.committed = true;
      p.slot_size = slot;
      p.state.assign(o_.page_size / slot, Fresh);
      if (o_.strategy == Strategy::Generational) p.gen_tag = draw();
      for (std::uint64_t g = 0; g < granules_per_page_; ++g) shadow_[i * granules_per_page_ + g] = freed_;
      return static_cast<std::int64_t>(i);
    }
    throw std::bad_alloc();
  }

  Options o_;
  std::mt19937_64 rng_;
  std::uint64_t page_count_;
  std::uint64_t granules_per_page_;
  std::uint8_t freed_;
  std::uint64_t tag_space_;
  std::vector<std::uint8_t> shadow_;
  std::vector<Page> pages_;
  std::vector<std::int64_t> current_;
};

}  // namespace tagheap::testing
