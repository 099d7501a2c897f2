// Workload benchmarks and configuration sweeps.
#pragma once

#include <functional>
#include <vector>

#include "tagheap/cli/config.hpp"
#include "tagheap/cli/records.hpp"
#include "tagheap/cli/workload.hpp"

namespace tagheap::cli {

// Fully associative LRU translation cache over virtual page numbers.
class SimulatedTlb {
 public:
  explicit SimulatedTlb(std::size_t entries = 64) : entries_(entries) {}

  // Returns true on a miss.
  bool access(std::uint64_t page);
  std::uint64_t misses() const noexcept { return misses_; }

 private:
  std::size_t entries_;
  std::vector<std::uint64_t> pages_;  // most recently used last
  std::uint64_t misses_ = 0;
};

// Runs one cell. Failures (heap exhaustion, missing huge pages) are captured
// in the report rather than thrown.
RunReport run_workload(const WorkloadSpec& workload, const RunConfig& config);

struct BenchMatrix {
  std::vector<TagStrategy::Kind> strategies;
  std::vector<unsigned> tag_bits;
  std::vector<std::uint64_t> page_sizes;
};

// Strategy-major order; `sink` sees each report as soon as its cell finishes.
std::vector<RunReport> run_matrix(const WorkloadSpec& workload, const RunConfig& base, const BenchMatrix& matrix,
                                  const std::function<void(const RunReport&)>& sink = {});

json bench_summary(const std::vector<RunReport>& reports);

}  // namespace tagheap::cli
