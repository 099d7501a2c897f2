// Aggregation of bench artifacts (line-delimited JSON) into JSON, text
// tables and CSV.
#pragma once

#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tagheap/cli/records.hpp"

namespace tagheap::cli {

enum class ReportFormat { Json, Table, Csv };

ReportFormat parse_report_format(std::string_view name);

// Malformed artifact; the message starts with "<file>:<line>:".
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Keeps "run" records and skips the other record types.
std::vector<RunReport> parse_run_reports(std::istream& in, const std::string& source);
std::vector<RunReport> load_run_reports(const std::vector<std::string>& paths);

std::string render(const std::vector<RunReport>& reports, ReportFormat format);
std::string render_json(const std::vector<RunReport>& reports);
std::string render_table(const std::vector<RunReport>& reports);
std::string render_csv(const std::vector<RunReport>& reports);

}  // namespace tagheap::cli
