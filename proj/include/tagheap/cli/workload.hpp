// Synthetic workloads driven by the bench command.
//
// churn     random alloc/free around the live-set target, one read per op
// traverse  fill the live set, then read every object round-robin
// mixed     fill, then 80% round-robin reads and 20% free+replace
//
// The decision stream depends only on the workload seed, never on addresses
// or on the allocator's tag draws, so every configuration replays the same
// trace.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tagheap::cli {

enum class AccessPattern { Churn, Traverse, Mixed };

AccessPattern parse_pattern(std::string_view name);
std::string_view pattern_name(AccessPattern pattern) noexcept;

struct SizeDistribution {
  std::uint64_t min = 32;
  std::uint64_t max = 32;

  static SizeDistribution fixed(std::uint64_t size) { return {size, size}; }
  static SizeDistribution uniform(std::uint64_t lo, std::uint64_t hi) { return {lo, hi}; }
  bool is_fixed() const noexcept { return min == max; }

  // Accepts "N" or "A:B".
  static SizeDistribution parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const SizeDistribution&, const SizeDistribution&) = default;
};

struct WorkloadSpec {
  std::string name = "traverse";
  std::uint64_t op_count = 300000;
  SizeDistribution object_size;
  std::uint64_t live_target = 100000;
  AccessPattern pattern = AccessPattern::Traverse;
  std::uint64_t seed = 1;

  // Named presets: "traverse", "churn", "mixed".
  static WorkloadSpec preset(std::string_view name);
  // Throws std::invalid_argument for empty or inconsistent workloads.
  void validate() const;

  friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

// The workload's decision stream.
class WorkloadRng {
 public:
  explicit WorkloadRng(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t below(std::uint64_t n) { return rng_() % n; }
  bool percent(unsigned p) { return below(100) < p; }
  std::uint64_t size(const SizeDistribution& d) { return d.is_fixed() ? d.min : d.min + below(d.max - d.min + 1); }

 private:
  std::mt19937_64 rng_;
};

}  // namespace tagheap::cli
