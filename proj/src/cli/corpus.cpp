#include "tagheap/cli/corpus.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <sstream>
#include <system_error>

extern char** environ;

namespace tagheap::cli {

namespace {

constexpr std::size_t kObjectSize = 64;

const std::vector<std::pair<CorpusCase, std::string_view>> kCaseNames = {
    {CorpusCase::UafReadFirstGranule, "uaf_read_first_granule"},
    {CorpusCase::UafReadInterior, "uaf_read_interior"},
    {CorpusCase::UafWrite, "uaf_write"},
    {CorpusCase::DoubleFree, "double_free"},
    {CorpusCase::InvalidFree, "invalid_free"},
    {CorpusCase::TagBruteforce, "tag_bruteforce"},
};

void write_line(const std::string& line) {
  const std::string out = line + "\n";
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::write(STDOUT_FILENO, out.data() + done, out.size() - done);
    if (n <= 0) {
      if (errno == EINTR) continue;
      return;
    }
    done += static_cast<std::size_t>(n);
  }
}

[[noreturn]] void terminate_on_violation(const ViolationRecord& record) {
  write_line(to_json(record).dump());
  std::abort();
}

class ChildProgram {
 public:
  ChildProgram(const RunConfig& config)
      : heap_(Allocator::create(config.layout(), config.page_size, config.allocator_config())),
        checker_(*heap_, config.checker_config()) {}

  TaggedAddress alloc(std::size_t size) { return heap_->alloc(size); }

  void free(TaggedAddress p) {
    const FreeResult r = heap_->free(p);
    if (!r.ok()) terminate_on_violation(checker_.report(r));
  }

  std::uint64_t read(TaggedAddress p) {
    std::uint64_t word = 0;
    const AccessVerdict v = checker_.checked_read(p, std::as_writable_bytes(std::span(&word, 1)));
    if (v.is_violation()) terminate_on_violation(checker_.report(v));
    return word;
  }

  void write(TaggedAddress p, std::uint64_t word) {
    const AccessVerdict v = checker_.checked_write(p, std::as_bytes(std::span(&word, 1)));
    if (v.is_violation()) terminate_on_violation(checker_.report(v));
  }

  Allocator& heap() { return *heap_; }
  const Checker& checker() const { return checker_; }

 private:
  std::unique_ptr<Allocator> heap_;
  Checker checker_;
};

TaggedAddress offset(TaggedAddress p, std::uint64_t bytes) { return TaggedAddress{p.raw + bytes}; }

int bruteforce(ChildProgram& prog, const PointerLayout& layout, std::uint64_t iterations) {
  std::uint64_t reused = 0, escapes = 0, caught_before_reuse = 0;
  for (std::uint64_t i = 0; i < iterations; ++i) {
    const TaggedAddress p = prog.alloc(32);
    prog.free(p);
    if (prog.checker().check(p).is_violation()) ++caught_before_reuse;
    const TaggedAddress q = prog.alloc(32);
    if (suffix_of(layout, q) == suffix_of(layout, p)) {
      ++reused;
      if (prog.checker().check(p).ok()) ++escapes;
    }
    prog.free(q);
  }
  write_line(json{{"type", "bruteforce"},
                  {"schema_version", kSchemaVersion},
                  {"iterations", iterations},
                  {"caught_before_reuse", caught_before_reuse},
                  {"reused", reused},
                  {"escapes", escapes}}
                 .dump());
  return 0;
}

std::vector<std::string> child_argv(const std::string& exe, CorpusCase c, const RunConfig& config,
                                    std::uint64_t iterations) {
  return {exe,
          std::string(kCorpusChildCommand),
          std::string(corpus_case_name(c)),
          "--strategy",
          std::string(to_string(config.strategy)),
          "--tag-bits",
          std::to_string(config.tag_bits),
          "--suffix-bits",
          std::to_string(config.suffix_bits),
          "--page-size",
          page_size_name(config.page_size),
          "--poison",
          std::string(poison_name(config.poison)),
          "--check-order",
          std::string(check_order_name(config.check_order)),
          "--seed",
          std::to_string(config.seed),
          "--iterations",
          std::to_string(iterations)};
}

CorpusTrial spawn_child(const std::vector<std::string>& args) {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw std::system_error(errno, std::generic_category(), "pipe2");

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, "/dev/null", O_WRONLY, 0);

  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  pid_t pid = 0;
  const int rc = ::posix_spawn(&pid, args[0].c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(fds[1]);
  if (rc != 0) {
    ::close(fds[0]);
    throw std::system_error(rc, std::generic_category(), "posix_spawn " + args[0]);
  }

  std::string output;
  char buf[4096];
  for (;;) {
    const ssize_t n = ::read(fds[0], buf, sizeof buf);
    if (n > 0) {
      output.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0 || errno != EINTR) {
      break;
    }
  }
  ::close(fds[0]);

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw std::system_error(errno, std::generic_category(), "waitpid");
  }

  CorpusTrial trial;
  trial.signaled = WIFSIGNALED(status);
  trial.signal = trial.signaled ? WTERMSIG(status) : 0;
  trial.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::istringstream lines(output);
  for (std::string line; std::getline(lines, line);) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (!j.is_discarded()) trial.records.push_back(std::move(j));
  }
  return trial;
}

std::optional<ViolationKind> expected_kind(Expectation e) {
  switch (e) {
    case Expectation::AbortUaf:
      return ViolationKind::Uaf;
    case Expectation::AbortDoubleFree:
      return ViolationKind::DoubleFree;
    case Expectation::AbortInvalidFree:
      return ViolationKind::InvalidFree;
    default:
      return std::nullopt;
  }
}

}  // namespace

CorpusCase parse_corpus_case(std::string_view name) {
  for (const auto& [c, n] : kCaseNames) {
    if (n == name) return c;
  }
  throw std::invalid_argument("unknown corpus case '" + std::string(name) + "'");
}

std::string_view corpus_case_name(CorpusCase c) noexcept {
  for (const auto& [k, n] : kCaseNames) {
    if (k == c) return n;
  }
  return "unknown";
}

const std::vector<CorpusCase>& all_corpus_cases() {
  static const std::vector<CorpusCase> cases = [] {
    std::vector<CorpusCase> out;
    for (const auto& entry : kCaseNames) out.push_back(entry.first);
    return out;
  }();
  return cases;
}

std::string_view expectation_name(Expectation e) noexcept {
  switch (e) {
    case Expectation::AbortUaf:
      return "abort with UAF record";
    case Expectation::AbortDoubleFree:
      return "abort with DoubleFree record";
    case Expectation::AbortInvalidFree:
      return "abort with InvalidFree record";
    case Expectation::PassThrough:
      return "pass-through (interior granule not poisoned before reuse)";
    case Expectation::Measure:
      return "measured escape rate";
  }
  return "unknown";
}

Expectation expected_outcome(CorpusCase c, PoisonMode poison) noexcept {
  switch (c) {
    case CorpusCase::UafReadFirstGranule:
    case CorpusCase::UafWrite:
      return Expectation::AbortUaf;
    case CorpusCase::UafReadInterior:
      return poison == PoisonMode::WholeAllocation ? Expectation::AbortUaf : Expectation::PassThrough;
    case CorpusCase::DoubleFree:
      return Expectation::AbortDoubleFree;
    case CorpusCase::InvalidFree:
      return Expectation::AbortInvalidFree;
    case CorpusCase::TagBruteforce:
      return Expectation::Measure;
  }
  return Expectation::Measure;
}

DoubleFreeTrial inject_double_free(Allocator& heap, std::mt19937_64& rng) {
  const std::uint64_t page = heap.page_size();
  const std::uint64_t max_size = std::min<std::uint64_t>(page / 2, 512);
  auto draw_size = [&] { return static_cast<std::size_t>(1 + rng() % max_size); };

  std::vector<TaggedAddress> live;
  const std::size_t warmup = 1 + rng() % 32;
  for (std::size_t i = 0; i < warmup; ++i) {
    live.push_back(heap.alloc(draw_size()));
    if (live.size() > 1 && rng() % 3 == 0) {
      const std::size_t k = rng() % live.size();
      heap.free(live[k]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }

  const std::size_t victim_index = rng() % live.size();
  const TaggedAddress victim = live[victim_index];
  live.erase(live.begin() + static_cast<std::ptrdiff_t>(victim_index));
  const std::uint64_t victim_slot = heap.slot_span(victim)->length;
  heap.free(victim);

  // Between the two frees: frees of others, and allocations from larger
  // size classes only.
  const std::size_t between = rng() % 8;
  for (std::size_t i = 0; i < between; ++i) {
    if (!live.empty() && rng() % 2 == 0) {
      const std::size_t k = rng() % live.size();
      heap.free(live[k]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
    } else if (victim_slot < page) {
      live.push_back(heap.alloc(victim_slot + 1 + rng() % (page - victim_slot)));
    }
  }

  DoubleFreeTrial out{victim, heap.free(victim)};
  for (const auto& p : live) heap.free(p);
  return out;
}

int run_corpus_child(CorpusCase c, const RunConfig& config, std::uint64_t iterations) {
  const rlimit no_core{0, 0};
  ::setrlimit(RLIMIT_CORE, &no_core);

  ChildProgram prog(config);
  const PointerLayout& layout = prog.heap().layout();
  switch (c) {
    case CorpusCase::UafReadFirstGranule: {
      const auto p = prog.alloc(kObjectSize);
      prog.write(p, 0x1111);
      prog.free(p);
      prog.read(p);
      return 0;
    }
    case CorpusCase::UafReadInterior: {
      const auto p = prog.alloc(kObjectSize);
      prog.write(offset(p, 32), 0x2222);
      prog.free(p);
      prog.read(offset(p, 32));
      return 0;
    }
    case CorpusCase::UafWrite: {
      const auto p = prog.alloc(kObjectSize);
      prog.free(p);
      prog.write(p, 0xdead);
      return 0;
    }
    case CorpusCase::DoubleFree: {
      std::mt19937_64 rng(config.seed);
      const DoubleFreeTrial t = inject_double_free(prog.heap(), rng);
      if (!t.second_free.ok()) terminate_on_violation(prog.checker().report(t.second_free));
      return 0;
    }
    case CorpusCase::InvalidFree: {
      const auto p = prog.alloc(kObjectSize);
      prog.free(offset(p, 16));
      return 0;
    }
    case CorpusCase::TagBruteforce:
      return bruteforce(prog, layout, iterations);
  }
  return 2;
}

json CorpusSummary::to_json() const {
  json out{{"type", "corpus"},
           {"schema_version", kSchemaVersion},
           {"case", std::string(corpus_case_name(corpus_case))},
           {"expected", std::string(expectation_name(expected))},
           {"trials", trials},
           {"matched", matched},
           {"ok", ok},
           {"detail", detail}};
  if (corpus_case == CorpusCase::TagBruteforce) {
    out["reused"] = reused;
    out["escapes"] = escapes;
    out["escape_rate"] = escape_rate ? json(*escape_rate) : json(nullptr);
  }
  return out;
}

CorpusSummary run_corpus(CorpusCase c, const RunConfig& config, std::uint64_t trials, const std::string& exe) {
  CorpusSummary summary;
  summary.corpus_case = c;
  summary.expected = expected_outcome(c, config.poison);
  summary.trials = trials;

  if (c == CorpusCase::TagBruteforce) {
    const CorpusTrial t = spawn_child(child_argv(exe, c, config, trials));
    const json* result = nullptr;
    for (const auto& r : t.records) {
      if (r.value("type", "") == "bruteforce") result = &r;
    }
    if (t.signaled || t.exit_code != 0 || result == nullptr) {
      summary.detail = "bruteforce child failed";
      return summary;
    }
    summary.reused = (*result)["reused"].get<std::uint64_t>();
    summary.escapes = (*result)["escapes"].get<std::uint64_t>();
    summary.matched = trials;
    if (summary.reused == 0) {
      summary.ok = true;
      summary.detail = "no immediate slot reuse under this strategy; escape rate not measurable";
      return summary;
    }
    const double rate = static_cast<double>(summary.escapes) / static_cast<double>(summary.reused);
    summary.escape_rate = rate;
    if (config.strategy == TagStrategy::Kind::Random) {
      const double p = 1.0 / static_cast<double>(assignable_tag_count(config.layout()));
      const double band = 4.0 * std::sqrt(p * (1 - p) / static_cast<double>(summary.reused));
      summary.ok = std::abs(rate - p) <= band;
      std::ostringstream d;
      d << "escape rate " << rate << " vs expected " << p << " +/- " << band;
      summary.detail = d.str();
    } else {
      summary.ok = true;
      summary.detail = "escape rate " + std::to_string(rate) + " (informational for this strategy)";
    }
    return summary;
  }

  const auto want = expected_kind(summary.expected);
  for (std::uint64_t i = 0; i < trials; ++i) {
    RunConfig cfg = config;
    cfg.seed = config.seed + i;
    CorpusTrial t = spawn_child(child_argv(exe, c, cfg, 1));
    std::optional<ViolationRecord> record;
    for (const auto& r : t.records) {
      try {
        record = violation_from_json(r);
      } catch (const SchemaError&) {
      }
    }
    if (want) {
      t.matched = t.signaled && t.signal == SIGABRT && record && record->kind == *want;
    } else {
      t.matched = !t.signaled && t.exit_code == 0 && !record;
    }
    if (record) summary.violations.push_back(*record);
    if (t.matched) ++summary.matched;
  }
  summary.ok = summary.matched == trials;
  summary.detail = std::to_string(summary.matched) + "/" + std::to_string(trials) + " trials: " +
                   std::string(expectation_name(summary.expected));
  return summary;
}

}  // namespace tagheap::cli
