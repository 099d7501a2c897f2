// Runtime access validation.
//
// check() is the software equivalent of the inline validation sequence:
// extract the tag from the pointer, look up the shadow byte for its heap
// offset, and compare. Pointers outside the heap prefix are exempt. The two
// CheckOrder values evaluate the same predicate with the shadow compare or
// the prefix test first.
//
// validate() captures the allocator's free epoch in a ValidatedHandle. As long
// as no free happens, use() may access memory through the handle without
// another shadow lookup, and derive_within() extends the validation to other
// offsets of the same slot.
#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>

#include "tagheap/mtalloc.hpp"

namespace tagheap {

enum class CheckOrder { TagFirst, PrefixFirst };

struct AccessVerdict {
  enum class Kind { HeapOk, NonHeapOk, UafViolation };

  Kind kind = Kind::HeapOk;
  TaggedAddress addr{};
  Tag embedded{};
  std::uint8_t shadow = 0;

  bool ok() const noexcept { return kind != Kind::UafViolation; }
  bool is_violation() const noexcept { return kind == Kind::UafViolation; }

  friend bool operator==(const AccessVerdict&, const AccessVerdict&) = default;
};

class ValidatedHandle {
 public:
  TaggedAddress addr() const noexcept { return addr_; }
  FreeEpoch epoch() const noexcept { return epoch_; }
  bool heap() const noexcept { return heap_; }
  // Canonical slot bounds (heap handles only).
  const SlotSpan& span() const noexcept { return span_; }

 private:
  friend class Checker;
  ValidatedHandle(TaggedAddress addr, FreeEpoch epoch, bool heap, SlotSpan span)
      : addr_(addr), epoch_(epoch), heap_(heap), span_(span) {}

  TaggedAddress addr_;
  FreeEpoch epoch_;
  bool heap_;
  SlotSpan span_;
};

enum class UseStatus { Done, RevalidationRequired };

enum class ViolationKind { Uaf, DoubleFree, InvalidFree };

std::string_view to_string(ViolationKind kind) noexcept;

struct ViolationRecord {
  ViolationKind kind = ViolationKind::Uaf;
  std::uint64_t address = 0;
  unsigned embedded_tag = 0;
  unsigned shadow_tag = 0;
  std::string strategy;
  std::uint64_t epoch = 0;
  std::int64_t timestamp_ns = 0;

  friend bool operator==(const ViolationRecord&, const ViolationRecord&) = default;
};

struct CheckerConfig {
  CheckOrder order = CheckOrder::TagFirst;
  // Check every granule an access spans instead of only the first.
  bool strict_span = false;
};

class Checker {
 public:
  explicit Checker(const Allocator& allocator, CheckerConfig config = {}) noexcept
      : allocator_(&allocator), config_(config) {}

  const CheckerConfig& config() const noexcept { return config_; }

  AccessVerdict check(TaggedAddress addr) const noexcept { return check(addr, config_.order); }
  AccessVerdict check(TaggedAddress addr, CheckOrder order) const noexcept;

  // The access goes through `addr` itself, whatever its tag. No bytes move on
  // a violation.
  AccessVerdict checked_read(TaggedAddress addr, std::span<std::byte> out) const noexcept;
  AccessVerdict checked_write(TaggedAddress addr, std::span<const std::byte> in) const noexcept;

  // Holds either a handle or the violation verdict.
  std::variant<ValidatedHandle, AccessVerdict> validate(TaggedAddress addr) const noexcept;

  // Handle for another address inside the validated slot, without a lookup.
  std::optional<ValidatedHandle> derive_within(const ValidatedHandle& handle,
                                               std::int64_t offset) const noexcept;

  bool is_current(const ValidatedHandle& handle) const noexcept {
    return allocator_->current_epoch() == handle.epoch();
  }

  template <class Access>
  UseStatus use(const ValidatedHandle& handle, Access&& access) const {
    if (!is_current(handle)) return UseStatus::RevalidationRequired;
    std::forward<Access>(access)(handle.addr().as<std::byte>());
    return UseStatus::Done;
  }
  UseStatus use_read(const ValidatedHandle& handle, std::span<std::byte> out) const noexcept;
  UseStatus use_write(const ValidatedHandle& handle, std::span<const std::byte> in) const noexcept;

  ViolationRecord report(const AccessVerdict& verdict) const;
  ViolationRecord report(const FreeResult& result) const;

  std::uint64_t shadow_lookups() const noexcept { return lookups_.load(std::memory_order_relaxed); }

 private:
  // Returns the shadow byte, or nullopt when the granule has no committed shadow.
  std::optional<std::uint8_t> lookup(std::uint64_t granule) const noexcept;
  AccessVerdict check_span(TaggedAddress addr, std::size_t len) const noexcept;

  const Allocator* allocator_;
  CheckerConfig config_;
  mutable std::atomic<std::uint64_t> lookups_{0};
};

}  // namespace tagheap
