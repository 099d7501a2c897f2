#include "tagheap/cli/config.hpp"

#include <stdexcept>

namespace tagheap::cli {

AllocatorConfig RunConfig::allocator_config() const {
  AllocatorConfig out;
  switch (strategy) {
    case TagStrategy::Kind::Fixed:
      out.strategy = TagStrategy::fixed(Tag{0});
      break;
    case TagStrategy::Kind::Random:
      out.strategy = TagStrategy::random();
      break;
    case TagStrategy::Kind::Generational:
      out.strategy = TagStrategy::generational();
      break;
  }
  out.poison = poison;
  out.seed = seed;
  return out;
}

TagStrategy::Kind parse_strategy(std::string_view name) {
  if (name == "fixed") return TagStrategy::Kind::Fixed;
  if (name == "random") return TagStrategy::Kind::Random;
  if (name == "generational") return TagStrategy::Kind::Generational;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::uint64_t parse_page_size(std::string_view name) {
  if (name == "4k") return kSmallPage;
  if (name == "2m") return kHugePage;
  throw std::invalid_argument("unknown page size '" + std::string(name) + "' (expected 4k or 2m)");
}

std::string page_size_name(std::uint64_t page_size) {
  if (page_size == kSmallPage) return "4k";
  if (page_size == kHugePage) return "2m";
  return std::to_string(page_size);
}

PoisonMode parse_poison(std::string_view name) {
  if (name == "first") return PoisonMode::FirstGranule;
  if (name == "whole") return PoisonMode::WholeAllocation;
  throw std::invalid_argument("unknown poison mode '" + std::string(name) + "'");
}

std::string_view poison_name(PoisonMode mode) noexcept {
  return mode == PoisonMode::FirstGranule ? "first" : "whole";
}

CheckOrder parse_check_order(std::string_view name) {
  if (name == "tag-first") return CheckOrder::TagFirst;
  if (name == "prefix-first") return CheckOrder::PrefixFirst;
  throw std::invalid_argument("unknown check order '" + std::string(name) + "'");
}

std::string_view check_order_name(CheckOrder order) noexcept {
  return order == CheckOrder::TagFirst ? "tag-first" : "prefix-first";
}

}  // namespace tagheap::cli
