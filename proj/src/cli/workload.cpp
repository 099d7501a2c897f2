#include "tagheap/cli/workload.hpp"

#include <charconv>
#include <stdexcept>

namespace tagheap::cli {

namespace {

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw std::invalid_argument("not an unsigned integer: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

AccessPattern parse_pattern(std::string_view name) {
  if (name == "churn") return AccessPattern::Churn;
  if (name == "traverse") return AccessPattern::Traverse;
  if (name == "mixed") return AccessPattern::Mixed;
  throw std::invalid_argument("unknown access pattern '" + std::string(name) + "'");
}

std::string_view pattern_name(AccessPattern pattern) noexcept {
  switch (pattern) {
    case AccessPattern::Churn:
      return "churn";
    case AccessPattern::Traverse:
      return "traverse";
    case AccessPattern::Mixed:
      return "mixed";
  }
  return "unknown";
}

SizeDistribution SizeDistribution::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) return fixed(parse_u64(text));
  const auto lo = parse_u64(text.substr(0, colon));
  const auto hi = parse_u64(text.substr(colon + 1));
  if (lo > hi) throw std::invalid_argument("size range is reversed: '" + std::string(text) + "'");
  return uniform(lo, hi);
}

std::string SizeDistribution::to_string() const {
  if (is_fixed()) return std::to_string(min);
  return std::to_string(min) + ":" + std::to_string(max);
}

WorkloadSpec WorkloadSpec::preset(std::string_view name) {
  WorkloadSpec w;
  w.name = std::string(name);
  if (name == "traverse") {
    w.pattern = AccessPattern::Traverse;
    w.op_count = 300000;
    w.live_target = 100000;
    w.object_size = SizeDistribution::fixed(32);
  } else if (name == "churn") {
    w.pattern = AccessPattern::Churn;
    w.op_count = 200000;
    w.live_target = 10000;
    w.object_size = SizeDistribution::uniform(16, 256);
  } else if (name == "mixed") {
    w.pattern = AccessPattern::Mixed;
    w.op_count = 200000;
    w.live_target = 20000;
    w.object_size = SizeDistribution::uniform(16, 128);
  } else {
    throw std::invalid_argument("unknown workload '" + std::string(name) + "'");
  }
  return w;
}

void WorkloadSpec::validate() const {
  if (op_count == 0) throw std::invalid_argument("workload op_count must be positive");
  if (live_target == 0) throw std::invalid_argument("workload live_target must be positive");
  if (object_size.min == 0 || object_size.min > object_size.max) {
    throw std::invalid_argument("workload object size range is invalid");
  }
}

}  // namespace tagheap::cli
