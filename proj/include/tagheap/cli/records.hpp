// Line-delimited JSON records written by the CLI.
//
// Every line is an object with a "type" field ("run", "violation",
// "bruteforce" or "summary") and the schema version.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "tagheap/checker.hpp"
#include "tagheap/cli/config.hpp"
#include "tagheap/cli/workload.hpp"

namespace tagheap::cli {

inline constexpr int kSchemaVersion = 1;

using nlohmann::json;

// Thrown when a record does not match the schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunMetrics {
  std::uint64_t ops = 0;
  double wall_time_s = 0;
  double throughput_ops_per_s = 0;

  std::uint64_t distinct_virtual_pages_touched = 0;
  std::uint64_t distinct_physical_pages_touched = 0;
  // 64-entry fully associative LRU over tagged virtual pages.
  std::uint64_t simulated_tlb_misses = 0;

  std::uint64_t mapping_calls = 0;
  std::uint64_t pages_committed = 0;
  std::uint64_t heap_bytes_committed = 0;
  std::uint64_t shadow_bytes_committed = 0;
  double shadow_ratio = 0;

  std::uint64_t allocations = 0;
  std::uint64_t frees = 0;
  std::uint64_t retag_events = 0;

  std::uint64_t uaf_detections = 0;
  std::uint64_t double_free_detections = 0;
  std::uint64_t invalid_free_detections = 0;

  // Dangling pointers probed after their slot was handed out again.
  std::uint64_t escape_probes = 0;
  std::uint64_t escapes = 0;
  std::optional<double> escape_rate() const {
    if (escape_probes == 0) return std::nullopt;
    return static_cast<double>(escapes) / static_cast<double>(escape_probes);
  }

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct RunReport {
  WorkloadSpec workload;
  RunConfig config;
  RunMetrics metrics;
  bool ok = true;
  std::string error;
  std::int64_t timestamp_ns = 0;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

json to_json(const RunConfig& config);
RunConfig run_config_from_json(const json& j);

json to_json(const ViolationRecord& record);
ViolationRecord violation_from_json(const json& j);

json to_json(const RunReport& report);
RunReport run_report_from_json(const json& j);

// The report without wall time, throughput and timestamp.
json reproducible_view(const RunReport& report);

std::string record_type(const json& j);

}  // namespace tagheap::cli
