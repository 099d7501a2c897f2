#include "tagheap/cli/records.hpp"

#include <cmath>

namespace tagheap::cli {

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw SchemaError("record is not a JSON object");
  const auto it = j.find(key);
  if (it == j.end()) throw SchemaError(std::string("missing field '") + key + "'");
  return *it;
}

std::uint64_t get_u64(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw SchemaError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::int64_t get_i64(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_integer()) throw SchemaError(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

double get_double(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw SchemaError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::string get_string(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_boolean()) throw SchemaError(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

void expect_header(const json& j, const char* type) {
  if (get_string(j, "type") != type) throw SchemaError(std::string("expected a '") + type + "' record");
  if (get_i64(j, "schema_version") != kSchemaVersion) {
    throw SchemaError("unsupported schema_version " + field(j, "schema_version").dump());
  }
}

// Re-raise the enum parsers' invalid_argument as a schema error.
template <class F>
auto enum_field(const json& j, const char* key, F parse) {
  try {
    return parse(get_string(j, key));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("field '") + key + "': " + e.what());
  }
}

ViolationKind parse_violation_kind(std::string_view s) {
  if (s == "UAF") return ViolationKind::Uaf;
  if (s == "DoubleFree") return ViolationKind::DoubleFree;
  if (s == "InvalidFree") return ViolationKind::InvalidFree;
  throw std::invalid_argument("unknown violation kind '" + std::string(s) + "'");
}

}  // namespace

std::string record_type(const json& j) { return get_string(j, "type"); }

json to_json(const RunConfig& c) {
  return {{"strategy", std::string(to_string(c.strategy))},
          {"tag_bits", c.tag_bits},
          {"suffix_bits", c.suffix_bits},
          {"page_size", page_size_name(c.page_size)},
          {"poison", std::string(poison_name(c.poison))},
          {"check_order", std::string(check_order_name(c.check_order))},
          {"seed", c.seed}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.strategy = enum_field(j, "strategy", parse_strategy);
  c.tag_bits = static_cast<unsigned>(get_u64(j, "tag_bits"));
  c.suffix_bits = static_cast<unsigned>(get_u64(j, "suffix_bits"));
  c.page_size = enum_field(j, "page_size", parse_page_size);
  c.poison = enum_field(j, "poison", parse_poison);
  c.check_order = enum_field(j, "check_order", parse_check_order);
  c.seed = get_u64(j, "seed");
  return c;
}

json to_json(const ViolationRecord& r) {
  return {{"type", "violation"},
          {"schema_version", kSchemaVersion},
          {"kind", std::string(to_string(r.kind))},
          {"address", r.address},
          {"embedded_tag", r.embedded_tag},
          {"shadow_tag", r.shadow_tag},
          {"strategy", r.strategy},
          {"epoch", r.epoch},
          {"timestamp_ns", r.timestamp_ns}};
}

ViolationRecord violation_from_json(const json& j) {
  expect_header(j, "violation");
  ViolationRecord r;
  r.kind = enum_field(j, "kind", parse_violation_kind);
  r.address = get_u64(j, "address");
  r.embedded_tag = static_cast<unsigned>(get_u64(j, "embedded_tag"));
  r.shadow_tag = static_cast<unsigned>(get_u64(j, "shadow_tag"));
  r.strategy = get_string(j, "strategy");
  r.epoch = get_u64(j, "epoch");
  r.timestamp_ns = get_i64(j, "timestamp_ns");
  return r;
}

json to_json(const RunReport& r) {
  const RunMetrics& m = r.metrics;
  const WorkloadSpec& w = r.workload;
  const auto rate = m.escape_rate();
  return {
      {"type", "run"},
      {"schema_version", kSchemaVersion},
      {"ok", r.ok},
      {"error", r.error},
      {"timestamp_ns", r.timestamp_ns},
      {"workload",
       {{"name", w.name},
        {"pattern", std::string(pattern_name(w.pattern))},
        {"op_count", w.op_count},
        {"live_target", w.live_target},
        {"object_size", w.object_size.to_string()},
        {"seed", w.seed}}},
      {"config", to_json(r.config)},
      {"ops", m.ops},
      {"wall_time_s", m.wall_time_s},
      {"throughput_ops_per_s", m.throughput_ops_per_s},
      {"distinct_virtual_pages_touched", m.distinct_virtual_pages_touched},
      {"distinct_physical_pages_touched", m.distinct_physical_pages_touched},
      {"simulated_tlb_misses", m.simulated_tlb_misses},
      {"mapping_calls", m.mapping_calls},
      {"pages_committed", m.pages_committed},
      {"heap_bytes_committed", m.heap_bytes_committed},
      {"shadow_bytes_committed", m.shadow_bytes_committed},
      {"shadow_ratio", m.shadow_ratio},
      {"allocations", m.allocations},
      {"frees", m.frees},
      {"retag_events", m.retag_events},
      {"violations",
       {{"uaf", m.uaf_detections},
        {"double_free", m.double_free_detections},
        {"invalid_free", m.invalid_free_detections}}},
      {"escape",
       {{"probes", m.escape_probes}, {"escapes", m.escapes}, {"rate", rate ? json(*rate) : json(nullptr)}}},
  };
}

RunReport run_report_from_json(const json& j) {
  expect_header(j, "run");
  RunReport r;
  r.ok = get_bool(j, "ok");
  r.error = get_string(j, "error");
  r.timestamp_ns = get_i64(j, "timestamp_ns");

  const json& w = field(j, "workload");
  r.workload.name = get_string(w, "name");
  r.workload.pattern = enum_field(w, "pattern", parse_pattern);
  r.workload.op_count = get_u64(w, "op_count");
  r.workload.live_target = get_u64(w, "live_target");
  r.workload.object_size = enum_field(w, "object_size", SizeDistribution::parse);
  r.workload.seed = get_u64(w, "seed");

  r.config = run_config_from_json(field(j, "config"));

  RunMetrics& m = r.metrics;
  m.ops = get_u64(j, "ops");
  m.wall_time_s = get_double(j, "wall_time_s");
  m.throughput_ops_per_s = get_double(j, "throughput_ops_per_s");
  m.distinct_virtual_pages_touched = get_u64(j, "distinct_virtual_pages_touched");
  m.distinct_physical_pages_touched = get_u64(j, "distinct_physical_pages_touched");
  m.simulated_tlb_misses = get_u64(j, "simulated_tlb_misses");
  m.mapping_calls = get_u64(j, "mapping_calls");
  m.pages_committed = get_u64(j, "pages_committed");
  m.heap_bytes_committed = get_u64(j, "heap_bytes_committed");
  m.shadow_bytes_committed = get_u64(j, "shadow_bytes_committed");
  m.shadow_ratio = get_double(j, "shadow_ratio");
  m.allocations = get_u64(j, "allocations");
  m.frees = get_u64(j, "frees");
  m.retag_events = get_u64(j, "retag_events");

  const json& v = field(j, "violations");
  m.uaf_detections = get_u64(v, "uaf");
  m.double_free_detections = get_u64(v, "double_free");
  m.invalid_free_detections = get_u64(v, "invalid_free");

  const json& e = field(j, "escape");
  m.escape_probes = get_u64(e, "probes");
  m.escapes = get_u64(e, "escapes");
  const json& rate = field(e, "rate");
  if (!rate.is_null() && !rate.is_number()) throw SchemaError("field 'rate' must be a number or null");
  if (rate.is_null() != (m.escape_probes == 0)) throw SchemaError("escape rate does not match its probe count");
  return r;
}

json reproducible_view(const RunReport& report) {
  json j = to_json(report);
  j.erase("wall_time_s");
  j.erase("throughput_ops_per_s");
  j.erase("timestamp_ns");
  return j;
}

}  // namespace tagheap::cli
