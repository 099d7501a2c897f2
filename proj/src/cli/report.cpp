#include "tagheap/cli/report.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tagheap::cli {

namespace {

struct Column {
  const char* name;
  std::string (*value)(const RunReport&);
};

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"workload", [](const RunReport& r) { return r.workload.name; }},
      {"strategy", [](const RunReport& r) { return std::string(to_string(r.config.strategy)); }},
      {"tag_bits", [](const RunReport& r) { return std::to_string(r.config.tag_bits); }},
      {"page_size", [](const RunReport& r) { return page_size_name(r.config.page_size); }},
      {"poison", [](const RunReport& r) { return std::string(poison_name(r.config.poison)); }},
      {"check_order", [](const RunReport& r) { return std::string(check_order_name(r.config.check_order)); }},
      {"seed", [](const RunReport& r) { return std::to_string(r.config.seed); }},
      {"status", [](const RunReport& r) { return r.ok ? std::string("ok") : "failed: " + r.error; }},
      {"ops", [](const RunReport& r) { return std::to_string(r.metrics.ops); }},
      {"ops_per_s", [](const RunReport& r) { return fixed(r.metrics.throughput_ops_per_s, 0); }},
      {"vpages", [](const RunReport& r) { return std::to_string(r.metrics.distinct_virtual_pages_touched); }},
      {"ppages", [](const RunReport& r) { return std::to_string(r.metrics.distinct_physical_pages_touched); }},
      {"tlb_misses", [](const RunReport& r) { return std::to_string(r.metrics.simulated_tlb_misses); }},
      {"mapping_calls", [](const RunReport& r) { return std::to_string(r.metrics.mapping_calls); }},
      {"shadow_ratio", [](const RunReport& r) { return fixed(r.metrics.shadow_ratio, 4); }},
      {"uaf", [](const RunReport& r) { return std::to_string(r.metrics.uaf_detections); }},
      {"double_free", [](const RunReport& r) { return std::to_string(r.metrics.double_free_detections); }},
      {"escape_rate",
       [](const RunReport& r) {
         const auto rate = r.metrics.escape_rate();
         return rate ? fixed(*rate, 4) : std::string("-");
       }},
  };
  return cols;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "table") return ReportFormat::Table;
  if (name == "csv") return ReportFormat::Csv;
  throw std::invalid_argument("unknown report format '" + std::string(name) + "'");
}

std::vector<RunReport> parse_run_reports(std::istream& in, const std::string& source) {
  std::vector<RunReport> out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      if (record_type(j) == "run") out.push_back(run_report_from_json(j));
    } catch (const json::exception& e) {
      throw ArtifactError(where + "malformed JSON: " + e.what());
    } catch (const SchemaError& e) {
      throw ArtifactError(where + e.what());
    }
  }
  return out;
}

std::vector<RunReport> load_run_reports(const std::vector<std::string>& paths) {
  std::vector<RunReport> out;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw ArtifactError(path + ": cannot open");
    auto part = parse_run_reports(in, path);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

std::string render_json(const std::vector<RunReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr.dump(2) + "\n";
}

std::string render_table(const std::vector<RunReport>& reports) {
  const auto& cols = columns();
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> width;
  for (const auto& c : cols) width.push_back(std::string_view(c.name).size());
  for (const auto& r : reports) {
    auto& row = rows.emplace_back();
    for (std::size_t i = 0; i < cols.size(); ++i) {
      row.push_back(cols[i].value(r));
      width[i] = std::max(width[i], row.back().size());
    }
  }
  std::ostringstream out;
  out << "schema_version " << kSchemaVersion << ", " << reports.size() << " runs\n";
  auto emit = [&](auto cell) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      out << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << cell(i);
    }
    out << "\n";
  };
  emit([&](std::size_t i) { return std::string(cols[i].name); });
  for (const auto& row : rows) emit([&](std::size_t i) { return row[i]; });
  return out.str();
}

std::string render_csv(const std::vector<RunReport>& reports) {
  const auto& cols = columns();
  std::ostringstream out;
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i].name;
  out << "\n";
  for (const auto& r : reports) {
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << csv_escape(cols[i].value(r));
    out << "\n";
  }
  return out.str();
}

std::string render(const std::vector<RunReport>& reports, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json:
      return render_json(reports);
    case ReportFormat::Table:
      return render_table(reports);
    case ReportFormat::Csv:
      return render_csv(reports);
  }
  return {};
}

}  // namespace tagheap::cli
