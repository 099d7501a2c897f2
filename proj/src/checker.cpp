#include "tagheap/checker.hpp"

#include <chrono>
#include <cstring>
#include <stdexcept>

namespace tagheap {

std::string_view to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::Uaf:
      return "UAF";
    case ViolationKind::DoubleFree:
      return "DoubleFree";
    case ViolationKind::InvalidFree:
      return "InvalidFree";
  }
  return "unknown";
}

std::optional<std::uint8_t> Checker::lookup(std::uint64_t granule) const noexcept {
  lookups_.fetch_add(1, std::memory_order_relaxed);
  const ShadowStore& shadow = allocator_->shadow();
  if (!shadow.is_committed_granule(granule)) return std::nullopt;
  return shadow.load(granule);
}

AccessVerdict Checker::check(TaggedAddress addr, CheckOrder order) const noexcept {
  using Kind = AccessVerdict::Kind;
  const PointerLayout& lay = allocator_->layout();
  const Tag embedded = decode_tag(lay, addr);
  const std::uint64_t granule = suffix_of(lay, addr) / lay.granule_size;

  if (order == CheckOrder::PrefixFirst) {
    if (!is_heap(lay, addr)) return {Kind::NonHeapOk, addr, {}, 0};
    const auto shadow = lookup(granule);
    if (shadow && *shadow == embedded.value) return {Kind::HeapOk, addr, embedded, *shadow};
    return {Kind::UafViolation, addr, embedded, shadow.value_or(freed_sentinel(lay))};
  }

  // Shadow compare first; the prefix is consulted only to label a match or to
  // rescue a mismatch that turns out to be a non-heap pointer.
  const auto shadow = lookup(granule);
  if (shadow && *shadow == embedded.value) {
    if (is_heap(lay, addr)) return {Kind::HeapOk, addr, embedded, *shadow};
    return {Kind::NonHeapOk, addr, {}, 0};
  }
  if (!is_heap(lay, addr)) return {Kind::NonHeapOk, addr, {}, 0};
  return {Kind::UafViolation, addr, embedded, shadow.value_or(freed_sentinel(lay))};
}

AccessVerdict Checker::check_span(TaggedAddress addr, std::size_t len) const noexcept {
  const AccessVerdict first = check(addr);
  if (!config_.strict_span || len <= 1 || first.is_violation()) return first;
  const std::uint64_t granule = allocator_->layout().granule_size;
  const std::uint64_t end = addr.raw + len;
  for (std::uint64_t g = (addr.raw / granule + 1) * granule; g < end; g += granule) {
    const AccessVerdict next = check(TaggedAddress{g});
    if (next.is_violation()) return next;
  }
  return first;
}

AccessVerdict Checker::checked_read(TaggedAddress addr, std::span<std::byte> out) const noexcept {
  const AccessVerdict verdict = check_span(addr, out.size());
  if (verdict.ok() && !out.empty()) std::memcpy(out.data(), addr.as<std::byte>(), out.size());
  return verdict;
}

AccessVerdict Checker::checked_write(TaggedAddress addr, std::span<const std::byte> in) const noexcept {
  const AccessVerdict verdict = check_span(addr, in.size());
  if (verdict.ok() && !in.empty()) std::memcpy(addr.as<std::byte>(), in.data(), in.size());
  return verdict;
}

std::variant<ValidatedHandle, AccessVerdict> Checker::validate(TaggedAddress addr) const noexcept {
  // Epoch first: a free racing the check must make the handle stale.
  const FreeEpoch epoch = allocator_->current_epoch();
  const AccessVerdict verdict = check(addr);
  if (verdict.is_violation()) return verdict;
  if (verdict.kind == AccessVerdict::Kind::NonHeapOk) return ValidatedHandle(addr, epoch, false, {});
  const auto span = allocator_->slot_span(addr);
  return ValidatedHandle(addr, epoch, true, span.value_or(SlotSpan{}));
}

std::optional<ValidatedHandle> Checker::derive_within(const ValidatedHandle& handle,
                                                      std::int64_t offset) const noexcept {
  const PointerLayout& lay = allocator_->layout();
  const TaggedAddress target{handle.addr().raw + static_cast<std::uint64_t>(offset)};
  if (!handle.heap()) {
    if (is_heap(lay, target)) return std::nullopt;
    return ValidatedHandle(target, handle.epoch(), false, {});
  }
  const std::int64_t from = static_cast<std::int64_t>(suffix_of(lay, handle.addr()) -
                                                      suffix_of(lay, handle.span().start));
  const std::int64_t to = from + offset;
  if (to < 0 || static_cast<std::uint64_t>(to) >= handle.span().length) return std::nullopt;
  return ValidatedHandle(target, handle.epoch(), true, handle.span());
}

UseStatus Checker::use_read(const ValidatedHandle& handle, std::span<std::byte> out) const noexcept {
  return use(handle, [&](const std::byte* p) { std::memcpy(out.data(), p, out.size()); });
}

UseStatus Checker::use_write(const ValidatedHandle& handle, std::span<const std::byte> in) const noexcept {
  return use(handle, [&](std::byte* p) { std::memcpy(p, in.data(), in.size()); });
}

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ViolationRecord Checker::report(const AccessVerdict& verdict) const {
  if (!verdict.is_violation()) throw std::invalid_argument("report: verdict is not a violation");
  return {ViolationKind::Uaf,
          verdict.addr.raw,
          verdict.embedded.value,
          verdict.shadow,
          std::string(to_string(allocator_->config().strategy.kind)),
          allocator_->current_epoch().value,
          now_ns()};
}

ViolationRecord Checker::report(const FreeResult& result) const {
  if (result.ok()) throw std::invalid_argument("report: free succeeded");
  return {result.status == FreeStatus::DoubleFree ? ViolationKind::DoubleFree : ViolationKind::InvalidFree,
          result.addr.raw,
          result.embedded.value,
          result.shadow,
          std::string(to_string(allocator_->config().strategy.kind)),
          allocator_->current_epoch().value,
          now_ns()};
}

}  // namespace tagheap
