#include <gtest/gtest.h>

#include <cstdio>
#include <random>
#include <sstream>

#include "tagheap/cli/bench.hpp"
#include "tagheap/cli/corpus.hpp"
#include "tagheap/cli/records.hpp"
#include "tagheap/cli/report.hpp"
#include "tagheap/cli/selftest.hpp"

namespace tagheap::cli {
namespace {

RunConfig small_config(TagStrategy::Kind strategy = TagStrategy::Kind::Random, unsigned tag_bits = 4) {
  RunConfig c;
  c.strategy = strategy;
  c.tag_bits = tag_bits;
  c.suffix_bits = 26;
  c.seed = 7;
  return c;
}

WorkloadSpec small_workload(std::string_view preset, std::uint64_t ops = 20000, std::uint64_t live = 5000) {
  WorkloadSpec w = WorkloadSpec::preset(preset);
  w.op_count = ops;
  w.live_target = live;
  w.seed = 11;
  return w;
}

TEST(CliNames, ParseAndPrintAreInverse) {
  for (auto s : {"fixed", "random", "generational"}) EXPECT_EQ(to_string(parse_strategy(s)), s);
  for (auto s : {"4k", "2m"}) EXPECT_EQ(page_size_name(parse_page_size(s)), s);
  for (auto s : {"first", "whole"}) EXPECT_EQ(poison_name(parse_poison(s)), s);
  for (auto s : {"tag-first", "prefix-first"}) EXPECT_EQ(check_order_name(parse_check_order(s)), s);
  for (auto s : {"churn", "traverse", "mixed"}) EXPECT_EQ(pattern_name(parse_pattern(s)), s);
  for (auto c : all_corpus_cases()) EXPECT_EQ(parse_corpus_case(corpus_case_name(c)), c);
  EXPECT_EQ(all_corpus_cases().size(), 6u);
  EXPECT_THROW(parse_strategy("lru"), std::invalid_argument);
  EXPECT_THROW(parse_page_size("1g"), std::invalid_argument);
  EXPECT_THROW(parse_report_format("xml"), std::invalid_argument);
}

TEST(CliWorkload, SizeDistributionParsing) {
  EXPECT_EQ(SizeDistribution::parse("48"), SizeDistribution::fixed(48));
  EXPECT_EQ(SizeDistribution::parse("16:256"), SizeDistribution::uniform(16, 256));
  EXPECT_EQ(SizeDistribution::parse("16:256").to_string(), "16:256");
  EXPECT_THROW(SizeDistribution::parse("9:3"), std::invalid_argument);
  EXPECT_THROW(SizeDistribution::parse("abc"), std::invalid_argument);
  EXPECT_THROW(WorkloadSpec::preset("spec"), std::invalid_argument);
  WorkloadSpec w;
  w.op_count = 0;
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(CliTlb, LruOracle) {
  SimulatedTlb tlb(2);
  // Entries after each access: [1] [1,2] [2,1] [1,3] [3,2] [2,1]
  const std::vector<std::pair<std::uint64_t, bool>> trace = {{1, true}, {2, true}, {1, false},
                                                             {3, true}, {2, true}, {1, true}};
  for (const auto& [page, miss] : trace) EXPECT_EQ(tlb.access(page), miss) << page;
  EXPECT_EQ(tlb.misses(), 5u);
}

TEST(CliRecords, ViolationRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    ViolationRecord r;
    r.kind = static_cast<ViolationKind>(rng() % 3);
    r.address = rng();
    r.embedded_tag = static_cast<unsigned>(rng() % 256);
    r.shadow_tag = static_cast<unsigned>(rng() % 256);
    r.strategy = std::string(to_string(static_cast<TagStrategy::Kind>(rng() % 3)));
    r.epoch = rng() >> 1;
    r.timestamp_ns = static_cast<std::int64_t>(rng() >> 1);
    const json parsed = json::parse(to_json(r).dump());
    EXPECT_EQ(violation_from_json(parsed), r);
  }
  ViolationRecord r;
  r.kind = ViolationKind::DoubleFree;
  EXPECT_EQ(to_json(r)["kind"], "DoubleFree");
  r.kind = ViolationKind::Uaf;
  EXPECT_EQ(to_json(r)["kind"], "UAF");
}

TEST(CliRecords, RunReportRoundTrip) {
  for (auto preset : {"traverse", "churn", "mixed"}) {
    const RunReport r = run_workload(small_workload(preset), small_config());
    ASSERT_TRUE(r.ok) << r.error;
    const json parsed = json::parse(to_json(r).dump());
    EXPECT_EQ(run_report_from_json(parsed), r) << preset;
  }
}

TEST(CliRecords, SchemaViolationsAreRejected) {
  const json good = to_json(run_workload(small_workload("churn", 2000, 200), small_config()));
  ASSERT_NO_THROW(run_report_from_json(good));

  json j = good;
  j.erase("distinct_virtual_pages_touched");
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  j = good;
  j["schema_version"] = kSchemaVersion + 1;
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  j = good;
  j["config"]["strategy"] = "lru";
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  j = good;
  j["ops"] = "many";
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  j = good;
  j["ops"] = -1;
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  j = good;
  j["type"] = "violation";
  EXPECT_THROW(run_report_from_json(j), SchemaError);
  EXPECT_THROW(violation_from_json(json::array()), SchemaError);
}

TEST(CliBench, ShadowRatioIsExactlyOneSixteenth) {
  for (auto strategy : {TagStrategy::Kind::Fixed, TagStrategy::Kind::Random, TagStrategy::Kind::Generational}) {
    for (unsigned t : {1u, 2u, 4u, 8u}) {
      const RunReport r = run_workload(small_workload("mixed"), small_config(strategy, t));
      ASSERT_TRUE(r.ok) << r.error;
      EXPECT_EQ(r.metrics.shadow_ratio, 0.0625);
      EXPECT_EQ(r.metrics.shadow_bytes_committed * 16, r.metrics.heap_bytes_committed);
      EXPECT_EQ(r.metrics.mapping_calls, r.metrics.pages_committed << t);
    }
  }
}

TEST(CliBench, IdenticalSeedsGiveIdenticalReports) {
  for (auto preset : {"traverse", "churn", "mixed"}) {
    const auto a = run_workload(small_workload(preset), small_config());
    const auto b = run_workload(small_workload(preset), small_config());
    EXPECT_EQ(reproducible_view(a).dump(), reproducible_view(b).dump()) << preset;
    RunConfig other = small_config();
    other.seed = 8;
    const auto c = run_workload(small_workload(preset), other);
    EXPECT_NE(reproducible_view(a).dump(), reproducible_view(c).dump()) << preset;
  }
}

TEST(CliBench, TraceDoesNotDependOnStrategy) {
  const auto w = small_workload("churn");
  const auto a = run_workload(w, small_config(TagStrategy::Kind::Fixed));
  const auto b = run_workload(w, small_config(TagStrategy::Kind::Generational, 8));
  EXPECT_EQ(a.metrics.allocations, b.metrics.allocations);
  EXPECT_EQ(a.metrics.frees, b.metrics.frees);
  EXPECT_EQ(a.metrics.ops, w.op_count);
}

TEST(CliBench, RandomSweepIsMonotoneInTagBits) {
  const auto w = small_workload("traverse", 30000, 20000);
  std::uint64_t previous = 0;
  for (unsigned t : {1u, 2u, 4u, 8u}) {
    const auto r = run_workload(w, small_config(TagStrategy::Kind::Random, t));
    EXPECT_GE(r.metrics.distinct_virtual_pages_touched, previous) << "T=" << t;
    previous = r.metrics.distinct_virtual_pages_touched;
  }
}

TEST(CliBench, FixedTouchesOnlyPhysicalPages) {
  const auto r = run_workload(small_workload("traverse"), small_config(TagStrategy::Kind::Fixed));
  EXPECT_EQ(r.metrics.distinct_virtual_pages_touched, r.metrics.distinct_physical_pages_touched);
  const auto g = run_workload(small_workload("traverse"), small_config(TagStrategy::Kind::Generational));
  EXPECT_EQ(g.metrics.distinct_virtual_pages_touched, r.metrics.distinct_virtual_pages_touched);
}

TEST(CliBench, EscapeRateOfFixedTagsIsTotal) {
  const auto r = run_workload(small_workload("churn"), small_config(TagStrategy::Kind::Fixed));
  ASSERT_GT(r.metrics.escape_probes, 0u);
  EXPECT_EQ(r.metrics.escapes, r.metrics.escape_probes);
  // Every freed pointer is caught on its first granule before reuse.
  EXPECT_EQ(r.metrics.uaf_detections, r.metrics.frees);
}

TEST(CliBench, FailedCellDoesNotStopTheSweep) {
  WorkloadSpec w = small_workload("traverse", 5000, 5000);
  w.object_size = SizeDistribution::fixed(4096);
  RunConfig tiny = small_config();
  tiny.suffix_bits = 16;  // 16 pages
  BenchMatrix m{{TagStrategy::Kind::Fixed, TagStrategy::Kind::Random}, {4}, {kSmallPage}};
  int seen = 0;
  const auto reports = run_matrix(w, tiny, m, [&](const RunReport&) { ++seen; });
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(seen, 2);
  for (const auto& r : reports) {
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.error, "heap exhausted");
  }
  EXPECT_EQ(bench_summary(reports)["failed"], 2);
}

TEST(CliReport, EmptyInputIsEmptyArray) {
  std::istringstream empty("");
  const auto reports = parse_run_reports(empty, "empty.jsonl");
  EXPECT_TRUE(reports.empty());
  EXPECT_EQ(json::parse(render_json(reports)), json::array());
}

TEST(CliReport, MalformedArtifactNamesTheFile) {
  std::istringstream bad("\n{\"type\": \"run\", \"schema_version\": 1}\n");
  try {
    parse_run_reports(bad, "runs/cell.jsonl");
    FAIL() << "expected ArtifactError";
  } catch (const ArtifactError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("runs/cell.jsonl:2:", 0), 0u) << e.what();
  }
  std::istringstream garbage("not json");
  EXPECT_THROW(parse_run_reports(garbage, "x"), ArtifactError);
  EXPECT_THROW(load_run_reports({"/nonexistent/file.jsonl"}), ArtifactError);
}

TEST(CliReport, RendersEveryFormat) {
  std::vector<RunReport> reports;
  for (auto s : {TagStrategy::Kind::Fixed, TagStrategy::Kind::Random}) {
    reports.push_back(run_workload(small_workload("churn", 4000, 500), small_config(s)));
  }
  std::ostringstream artifact;
  for (const auto& r : reports) artifact << to_json(r).dump() << "\n";
  artifact << bench_summary(reports).dump() << "\n";
  std::istringstream in(artifact.str());
  const auto loaded = parse_run_reports(in, "mem");
  ASSERT_EQ(loaded, reports);

  const json arr = json::parse(render_json(loaded));
  ASSERT_EQ(arr.size(), 2u);
  for (const auto& j : arr) {
    EXPECT_EQ(j["schema_version"], kSchemaVersion);
    EXPECT_EQ(j["shadow_ratio"], 0.0625);
    EXPECT_EQ(run_report_from_json(j), loaded[&j - &arr[0]]);
  }

  const std::string table = render_table(loaded);
  EXPECT_NE(table.find("schema_version 1"), std::string::npos);
  EXPECT_NE(table.find("random"), std::string::npos);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 4);

  const std::string csv = render_csv(loaded);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.rfind("workload,strategy,tag_bits", 0), 0u);
}

TEST(CliCorpus, DoubleFreeInjectionIsAlwaysDetected) {
  for (auto s : {TagStrategy::Kind::Fixed, TagStrategy::Kind::Random, TagStrategy::Kind::Generational}) {
    for (auto poison : {PoisonMode::FirstGranule, PoisonMode::WholeAllocation}) {
      RunConfig c = small_config(s);
      c.poison = poison;
      auto heap = Allocator::create(c.layout(), c.page_size, c.allocator_config());
      std::mt19937_64 rng(5);
      for (int i = 0; i < 500; ++i) {
        const auto t = inject_double_free(*heap, rng);
        ASSERT_EQ(t.second_free.status, FreeStatus::DoubleFree) << to_string(s) << " trial " << i;
      }
      EXPECT_EQ(heap->stats().bytes_live, 0u);
    }
  }
}

TEST(CliCorpus, ExpectedOutcomes) {
  EXPECT_EQ(expected_outcome(CorpusCase::UafReadInterior, PoisonMode::FirstGranule), Expectation::PassThrough);
  EXPECT_EQ(expected_outcome(CorpusCase::UafReadInterior, PoisonMode::WholeAllocation), Expectation::AbortUaf);
  EXPECT_EQ(expected_outcome(CorpusCase::DoubleFree, PoisonMode::FirstGranule), Expectation::AbortDoubleFree);
  EXPECT_EQ(expected_outcome(CorpusCase::InvalidFree, PoisonMode::FirstGranule), Expectation::AbortInvalidFree);
}

TEST(CliCorpus, ChildrenAbortWithTheExpectedRecord) {
  for (auto poison : {PoisonMode::FirstGranule, PoisonMode::WholeAllocation}) {
    RunConfig c = small_config();
    c.poison = poison;
    for (auto cc : all_corpus_cases()) {
      if (cc == CorpusCase::TagBruteforce) continue;
      const CorpusSummary s = run_corpus(cc, c, 5, TAGHEAP_BIN);
      EXPECT_TRUE(s.ok) << corpus_case_name(cc) << ": " << s.detail;
      const auto expected = expected_outcome(cc, poison);
      EXPECT_EQ(s.violations.size(), expected == Expectation::PassThrough ? 0u : 5u);
      for (const auto& v : s.violations) EXPECT_EQ(v.strategy, "random");
    }
  }
}

TEST(CliCorpus, BruteforceEscapeRateNearOneSixteenth) {
  const CorpusSummary s = run_corpus(CorpusCase::TagBruteforce, small_config(), 40000, TAGHEAP_BIN);
  ASSERT_TRUE(s.ok) << s.detail;
  ASSERT_EQ(s.reused, 40000u);
  ASSERT_TRUE(s.escape_rate.has_value());
  EXPECT_NEAR(*s.escape_rate, 1.0 / 16, 0.01);
}

int run_cli(const std::string& args, std::string* out = nullptr) {
  std::string cmd = std::string(TAGHEAP_BIN) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  std::string text;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) text += buf;
  const int status = ::pclose(pipe);
  if (out) *out = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliBinary, SelftestPasses) {
  std::string out;
  EXPECT_EQ(run_cli("selftest --suffix-bits 26", &out), 0) << out;
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 5) << out;
  EXPECT_EQ(out.find("FAIL"), std::string::npos);
}

TEST(CliBinary, HugePagesFailCleanlyOrWork) {
  std::string out;
  const int rc = run_cli("selftest --page-size 2m --suffix-bits 30", &out);
  if (rc == 3) {
    EXPECT_NE(out.find("huge pages unavailable"), std::string::npos) << out;
  } else {
    EXPECT_EQ(rc, 0) << out;
  }
}

TEST(CliBinary, ReportOfNothingIsEmptyArray) {
  std::string out;
  EXPECT_EQ(run_cli("report --format json", &out), 0);
  EXPECT_EQ(json::parse(out), json::array());
}

TEST(CliBinary, RejectsUnknownFlags) {
  EXPECT_NE(run_cli("bench --tag-bits 3"), 0);
  EXPECT_NE(run_cli("corpus heap_spray"), 0);
}

TEST(CliStress, CountsVerdicts) {
  StressOptions o;
  o.ops = 20000;
  o.slots = 64;
  const json r = run_stress(small_config(), o);
  EXPECT_EQ(r["allocations"], 20000);
  EXPECT_EQ(r["frees"], 20000);
  EXPECT_EQ(r["double_free_detections"], 0);
  EXPECT_EQ(r["passed"].get<std::uint64_t>() + r["flagged"].get<std::uint64_t>(), r["checks"].get<std::uint64_t>());
}

}  // namespace
}  // namespace tagheap::cli
