// tagheap command-line driver.
#include <pthread.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <system_error>

#include "CLI11.hpp"
#include "tagheap/cli/bench.hpp"
#include "tagheap/cli/corpus.hpp"
#include "tagheap/cli/report.hpp"
#include "tagheap/cli/selftest.hpp"

namespace {

using namespace tagheap;
using namespace tagheap::cli;

constexpr int kExitFailure = 1;
constexpr int kExitEnvironment = 2;
constexpr int kExitNoHugePages = 3;

// Heap aliases are MAP_SHARED, so a forked child would share every heap
// page with its parent.
void refuse_fork() {
  static const char msg[] = "tagheap: fork is not supported (heap pages are shared mappings)\n";
  [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg, sizeof msg - 1);
  std::_Exit(kExitEnvironment);
}

struct Flags {
  std::vector<std::string> strategies{"random"};
  std::vector<unsigned> tag_bits{4};
  std::vector<std::string> page_sizes{"4k"};
  unsigned suffix_bits = 34;
  std::string poison = "first";
  std::string check_order = "tag-first";
  std::uint64_t seed = 1;
  std::string json_path;

  RunConfig config() const {
    RunConfig c;
    c.strategy = parse_strategy(strategies.front());
    c.tag_bits = tag_bits.front();
    c.suffix_bits = suffix_bits;
    c.page_size = parse_page_size(page_sizes.front());
    c.poison = parse_poison(poison);
    c.check_order = parse_check_order(check_order);
    c.seed = seed;
    return c;
  }
};

void add_flags(CLI::App& app, Flags& f, bool sweep) {
  auto* s = app.add_option("--strategy", f.strategies, "Tag strategy")
                ->check(CLI::IsMember({"fixed", "random", "generational"}));
  auto* t = app.add_option("--tag-bits", f.tag_bits, "Tag width in bits")->check(CLI::IsMember({1, 2, 4, 8}));
  auto* p = app.add_option("--page-size", f.page_sizes, "Heap page size")->check(CLI::IsMember({"4k", "2m"}));
  if (sweep) {
    for (auto* o : {s, t, p}) o->delimiter(',')->description(o->get_description() + " (comma-separated sweep)");
  } else {
    for (auto* o : {s, t, p}) o->expected(1);
  }
  app.add_option("--suffix-bits", f.suffix_bits, "Heap offset width in bits")->check(CLI::Range(16u, 46u));
  app.add_option("--poison", f.poison, "Shadow poisoning on free")->check(CLI::IsMember({"first", "whole"}));
  app.add_option("--check-order", f.check_order, "Check branch order")
      ->check(CLI::IsMember({"tag-first", "prefix-first"}));
  app.add_option("--seed", f.seed, "RNG seed");
  app.add_option("--json", f.json_path, "Write line-delimited JSON records to this file");
}

class JsonSink {
 public:
  explicit JsonSink(const std::string& path) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  }
  void write(const json& j) {
    if (out_.is_open()) out_ << j.dump() << "\n" << std::flush;
  }

 private:
  std::ofstream out_;
};

// Probes the hugetlb pool without creating a heap.
void require_huge_pages() {
  PosixMemory os;
  os.destroy_shared_object(os.create_shared_object(kHugePage, true));
}

int cmd_selftest(const Flags& f) {
  const auto results = run_selftest(f.config());
  JsonSink sink(f.json_path);
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    sink.write({{"type", "selftest"}, {"schema_version", kSchemaVersion}, {"name", r.name}, {"passed", r.passed},
                {"detail", r.detail}});
    all = all && r.passed;
  }
  return all ? 0 : kExitFailure;
}

int cmd_corpus(const Flags& f, const std::string& which, std::uint64_t trials) {
  const RunConfig config = f.config();
  if (config.page_size == kHugePage) require_huge_pages();
  std::vector<CorpusCase> cases;
  if (which == "all") {
    cases = all_corpus_cases();
  } else {
    cases.push_back(parse_corpus_case(which));
  }
  JsonSink sink(f.json_path);
  bool all = true;
  for (const auto c : cases) {
    const CorpusSummary s = run_corpus(c, config, trials);
    std::cout << (s.ok ? "PASS " : "FAIL ") << corpus_case_name(c) << ": " << s.detail << "\n";
    for (const auto& v : s.violations) sink.write(to_json(v));
    sink.write(s.to_json());
    all = all && s.ok;
  }
  return all ? 0 : kExitFailure;
}

struct BenchFlags {
  std::string workload = "traverse";
  std::uint64_t ops = 0;
  std::uint64_t live = 0;
  std::string size;
  std::string csv_path;
};

int cmd_bench(const Flags& f, const BenchFlags& b) {
  WorkloadSpec w = WorkloadSpec::preset(b.workload);
  if (b.ops) w.op_count = b.ops;
  if (b.live) w.live_target = b.live;
  if (!b.size.empty()) w.object_size = SizeDistribution::parse(b.size);
  w.seed = f.seed;
  w.validate();

  BenchMatrix m;
  for (const auto& s : f.strategies) m.strategies.push_back(parse_strategy(s));
  m.tag_bits = f.tag_bits;
  for (const auto& p : f.page_sizes) m.page_sizes.push_back(parse_page_size(p));

  JsonSink sink(f.json_path);
  const auto reports = run_matrix(w, f.config(), m, [&](const RunReport& r) {
    sink.write(to_json(r));
    std::cerr << (r.ok ? "done " : "FAILED ") << to_string(r.config.strategy) << " T=" << r.config.tag_bits << " "
              << page_size_name(r.config.page_size) << (r.ok ? "" : ": " + r.error) << "\n";
  });
  const json summary = bench_summary(reports);
  sink.write(summary);
  std::cout << render_table(reports);
  if (!b.csv_path.empty()) {
    std::ofstream csv(b.csv_path);
    if (!csv) throw std::system_error(errno, std::generic_category(), "cannot open " + b.csv_path);
    csv << render_csv(reports);
  }
  return 0;
}

int cmd_report(const std::string& format, const std::vector<std::string>& inputs, const std::string& output) {
  const ReportFormat fmt = parse_report_format(format);
  const std::string text = render(load_run_reports(inputs), fmt);
  if (output.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(output);
    if (!out) throw std::system_error(errno, std::generic_category(), "cannot open " + output);
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  ::pthread_atfork(refuse_fork, nullptr, nullptr);

  CLI::App app{"tagheap: software memory-tagging heap driver"};
  app.require_subcommand(1);

  Flags selftest_flags, corpus_flags, bench_flags, stress_flags, child_flags;

  auto* selftest = app.add_subcommand("selftest", "Run platform and allocator self-tests");
  add_flags(*selftest, selftest_flags, false);

  auto* corpus = app.add_subcommand("corpus", "Run a bug-corpus case in child processes");
  add_flags(*corpus, corpus_flags, false);
  std::string corpus_case;
  std::uint64_t trials = 100;
  std::vector<std::string> case_names{"all"};
  for (const auto c : all_corpus_cases()) case_names.emplace_back(corpus_case_name(c));
  corpus->add_option("case", corpus_case, "Case name or 'all'")->required()->check(CLI::IsMember(case_names));
  corpus->add_option("--trials", trials, "Child processes per case (tag_bruteforce: loop iterations)")
      ->check(CLI::PositiveNumber);

  auto* bench = app.add_subcommand("bench", "Run a workload over a configuration sweep");
  bench_flags.strategies = {"fixed", "random", "generational"};
  bench_flags.tag_bits = {1, 2, 4, 8};
  add_flags(*bench, bench_flags, true);
  BenchFlags bf;
  bench->add_option("--workload", bf.workload, "Workload preset")->check(CLI::IsMember({"traverse", "churn", "mixed"}));
  bench->add_option("--ops", bf.ops, "Override operation count");
  bench->add_option("--live", bf.live, "Override live-set target");
  bench->add_option("--size", bf.size, "Object size N or range A:B");
  bench->add_option("--csv", bf.csv_path, "Also write a CSV export");

  auto* report = app.add_subcommand("report", "Aggregate bench artifacts");
  std::string format = "table", output;
  std::vector<std::string> inputs;
  report->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "table", "csv"}));
  report->add_option("--output,-o", output, "Write to a file instead of stdout");
  report->add_option("inputs", inputs, "Line-delimited JSON artifacts");

  auto* stress = app.add_subcommand("stress", "Two-thread alloc/free versus checked-access run");
  add_flags(*stress, stress_flags, false);
  StressOptions so;
  stress->add_option("--ops", so.ops, "Mutator operations");

  auto* child = app.add_subcommand(std::string(kCorpusChildCommand));
  child->group("");
  add_flags(*child, child_flags, false);
  std::string child_case;
  std::uint64_t iterations = 1;
  child->add_option("case", child_case)->required();
  child->add_option("--iterations", iterations);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*selftest) return cmd_selftest(selftest_flags);
    if (*corpus) return cmd_corpus(corpus_flags, corpus_case, trials);
    if (*bench) return cmd_bench(bench_flags, bf);
    if (*report) return cmd_report(format, inputs, output);
    if (*stress) {
      std::cout << run_stress(stress_flags.config(), so).dump() << "\n";
      return 0;
    }
    if (*child) return run_corpus_child(parse_corpus_case(child_case), child_flags.config(), iterations);
  } catch (const HugePagesUnavailable& e) {
    std::cerr << "tagheap: " << e.what() << "\n";
    return kExitNoHugePages;
  } catch (const ArtifactError& e) {
    std::cerr << "tagheap report: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::system_error& e) {
    std::cerr << "tagheap: platform error: " << e.what() << "\n";
    return kExitEnvironment;
  } catch (const std::exception& e) {
    std::cerr << "tagheap: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
