// Platform self-tests and the two-thread stress run.
#pragma once

#include <string>
#include <vector>

#include "tagheap/cli/config.hpp"
#include "tagheap/cli/records.hpp"

namespace tagheap::cli {

struct SelftestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Throws HugePagesUnavailable when 2 MiB pages were requested but the host
// has none, and std::system_error when shared mappings are unsupported.
std::vector<SelftestResult> run_selftest(const RunConfig& config);

struct StressOptions {
  std::uint64_t ops = 200000;
  std::size_t slots = 256;
};

// One thread allocates and frees into a shared slot table while the other
// reads through it with checked accesses. The race window between a check
// and the access is part of the contract, so verdicts are counted, not
// asserted.
json run_stress(const RunConfig& config, const StressOptions& options);

}  // namespace tagheap::cli
