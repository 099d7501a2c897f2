#include "tagheap/cli/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

namespace tagheap::cli {

bool SimulatedTlb::access(std::uint64_t page) {
  const auto it = std::find(pages_.begin(), pages_.end(), page);
  if (it != pages_.end()) {
    std::rotate(it, it + 1, pages_.end());
    return false;
  }
  ++misses_;
  if (pages_.size() == entries_) pages_.erase(pages_.begin());
  pages_.push_back(page);
  return true;
}

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class WorkloadRunner {
 public:
  WorkloadRunner(const WorkloadSpec& spec, const RunConfig& config, RunMetrics& m)
      : spec_(spec),
        heap_(Allocator::create(config.layout(), config.page_size, config.allocator_config())),
        checker_(*heap_, config.checker_config()),
        layout_(heap_->layout()),
        page_shift_(static_cast<unsigned>(std::countr_zero(config.page_size))),
        rng_(spec.seed),
        m_(m) {}

  void run() {
    switch (spec_.pattern) {
      case AccessPattern::Churn:
        churn();
        break;
      case AccessPattern::Traverse:
        traverse(0);
        break;
      case AccessPattern::Mixed:
        traverse(20);
        break;
    }
    finish();
  }

 private:
  void touch(TaggedAddress a) {
    vpages_.insert(a.raw >> page_shift_);
    ppages_.insert(suffix_of(layout_, a) >> page_shift_);
    tlb_.access(a.raw >> page_shift_);
  }

  void record(const AccessVerdict& v) {
    if (v.is_violation()) ++m_.uaf_detections;
  }

  void allocate() {
    const auto p = heap_->alloc(rng_.size(spec_.object_size));
    const std::uint64_t start = suffix_of(layout_, p);
    if (auto d = dangling_.find(start); d != dangling_.end()) {
      // Slot handed out again: does the stale pointer still pass?
      ++m_.escape_probes;
      if (checker_.check(d->second).ok()) ++m_.escapes;
      dangling_.erase(d);
    }
    const std::uint64_t stamp = live_.size();
    record(checker_.checked_write(p, std::as_bytes(std::span(&stamp, 1))));
    touch(p);
    live_.push_back(p);
    ++m_.ops;
  }

  void release(std::size_t index) {
    const TaggedAddress p = live_[index];
    live_[index] = live_.back();
    live_.pop_back();
    ++m_.ops;
    if (!heap_->free(p).ok()) return;
    // Before reuse the stale pointer must be caught on its first granule.
    record(checker_.check(p));
    dangling_[suffix_of(layout_, p)] = p;
  }

  void read(std::size_t index) {
    std::uint64_t word = 0;
    const TaggedAddress p = live_[index];
    record(checker_.checked_read(p, std::as_writable_bytes(std::span(&word, 1))));
    touch(p);
    sink_ += word;
    ++m_.ops;
  }

  void churn() {
    while (m_.ops < spec_.op_count) {
      const bool grow = live_.empty() || (live_.size() < spec_.live_target && rng_.percent(60));
      if (grow) {
        allocate();
      } else {
        release(rng_.below(live_.size()));
      }
      if (!live_.empty() && m_.ops < spec_.op_count) read(rng_.below(live_.size()));
    }
  }

  void traverse(unsigned replace_percent) {
    while (m_.ops < spec_.op_count && live_.size() < spec_.live_target) allocate();
    std::size_t cursor = 0;
    while (m_.ops < spec_.op_count) {
      if (replace_percent != 0 && rng_.percent(replace_percent)) {
        release(rng_.below(live_.size()));
        allocate();
        continue;
      }
      read(cursor);
      cursor = (cursor + 1) % live_.size();
    }
  }

  void finish() {
    const AllocatorStats s = heap_->stats();
    m_.distinct_virtual_pages_touched = vpages_.size();
    m_.distinct_physical_pages_touched = ppages_.size();
    m_.simulated_tlb_misses = tlb_.misses();
    m_.mapping_calls = s.mapping_calls;
    m_.pages_committed = s.pages_committed;
    m_.heap_bytes_committed = s.heap_bytes_committed;
    m_.shadow_bytes_committed = s.shadow_bytes_committed;
    m_.shadow_ratio = s.heap_bytes_committed == 0 ? 0.0
                                                  : static_cast<double>(s.shadow_bytes_committed) /
                                                        static_cast<double>(s.heap_bytes_committed);
    m_.allocations = s.allocations;
    m_.frees = s.frees;
    m_.retag_events = s.retag_events;
    m_.double_free_detections = s.double_free_detections;
    m_.invalid_free_detections = s.invalid_free_detections;
  }

  const WorkloadSpec& spec_;
  std::unique_ptr<Allocator> heap_;
  Checker checker_;
  PointerLayout layout_;
  unsigned page_shift_;
  WorkloadRng rng_;
  RunMetrics& m_;

  std::vector<TaggedAddress> live_;
  std::unordered_map<std::uint64_t, TaggedAddress> dangling_;
  std::unordered_set<std::uint64_t> vpages_;
  std::unordered_set<std::uint64_t> ppages_;
  SimulatedTlb tlb_;
  std::uint64_t sink_ = 0;
};

}  // namespace

RunReport run_workload(const WorkloadSpec& workload, const RunConfig& config) {
  RunReport report;
  report.workload = workload;
  report.config = config;
  report.timestamp_ns = now_ns();
  const auto t0 = std::chrono::steady_clock::now();
  try {
    workload.validate();
    WorkloadRunner(workload, config, report.metrics).run();
  } catch (const std::bad_alloc&) {
    report.ok = false;
    report.error = "heap exhausted";
  } catch (const std::exception& e) {
    report.ok = false;
    report.error = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.metrics.wall_time_s = secs;
  report.metrics.throughput_ops_per_s = secs > 0 ? static_cast<double>(report.metrics.ops) / secs : 0.0;
  return report;
}

std::vector<RunReport> run_matrix(const WorkloadSpec& workload, const RunConfig& base, const BenchMatrix& matrix,
                                  const std::function<void(const RunReport&)>& sink) {
  std::vector<RunReport> out;
  for (const auto strategy : matrix.strategies) {
    for (const unsigned t : matrix.tag_bits) {
      for (const std::uint64_t page : matrix.page_sizes) {
        RunConfig cell = base;
        cell.strategy = strategy;
        cell.tag_bits = t;
        cell.page_size = page;
        out.push_back(run_workload(workload, cell));
        if (sink) sink(out.back());
      }
    }
  }
  return out;
}

json bench_summary(const std::vector<RunReport>& reports) {
  std::uint64_t failed = 0;
  json cells = json::array();
  for (const auto& r : reports) {
    if (!r.ok) ++failed;
    cells.push_back({{"strategy", std::string(to_string(r.config.strategy))},
                     {"tag_bits", r.config.tag_bits},
                     {"page_size", page_size_name(r.config.page_size)},
                     {"ok", r.ok},
                     {"distinct_virtual_pages_touched", r.metrics.distinct_virtual_pages_touched},
                     {"shadow_ratio", r.metrics.shadow_ratio}});
  }
  return {{"type", "summary"},
          {"schema_version", kSchemaVersion},
          {"cells", reports.size()},
          {"failed", failed},
          {"results", cells}};
}

}  // namespace tagheap::cli
