// Run configuration shared by every subcommand, plus the name <-> enum
// mappings used on the command line and in reports.
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "tagheap/checker.hpp"
#include "tagheap/mtalloc.hpp"

namespace tagheap::cli {

struct RunConfig {
  TagStrategy::Kind strategy = TagStrategy::Kind::Random;
  unsigned tag_bits = 4;
  unsigned suffix_bits = 34;
  std::uint64_t page_size = kSmallPage;
  PoisonMode poison = PoisonMode::FirstGranule;
  CheckOrder check_order = CheckOrder::TagFirst;
  std::uint64_t seed = 1;

  PointerLayout layout() const { return make_layout(tag_bits, suffix_bits); }
  AllocatorConfig allocator_config() const;
  CheckerConfig checker_config() const { return {check_order, false}; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// All parse_* functions throw std::invalid_argument on unknown names.
TagStrategy::Kind parse_strategy(std::string_view name);
std::uint64_t parse_page_size(std::string_view name);
std::string page_size_name(std::uint64_t page_size);
PoisonMode parse_poison(std::string_view name);
std::string_view poison_name(PoisonMode mode) noexcept;
CheckOrder parse_check_order(std::string_view name);
std::string_view check_order_name(CheckOrder order) noexcept;

}  // namespace tagheap::cli
