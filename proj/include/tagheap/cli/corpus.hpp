// Bug corpus: small buggy programs run in child processes.
//
// The child installs the terminate-on-violation policy: the first violation
// is written to stdout as a JSON record and the child aborts. The parent only
// spawns and inspects children; it never creates a heap of its own.
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tagheap/cli/config.hpp"
#include "tagheap/cli/records.hpp"

namespace tagheap::cli {

enum class CorpusCase { UafReadFirstGranule, UafReadInterior, UafWrite, DoubleFree, InvalidFree, TagBruteforce };

CorpusCase parse_corpus_case(std::string_view name);
std::string_view corpus_case_name(CorpusCase c) noexcept;
const std::vector<CorpusCase>& all_corpus_cases();

enum class Expectation { AbortUaf, AbortDoubleFree, AbortInvalidFree, PassThrough, Measure };

std::string_view expectation_name(Expectation e) noexcept;
// Interior UAF only reaches the checker's attention when the whole slot is
// poisoned; with first-granule poison it passes through before reuse.
Expectation expected_outcome(CorpusCase c, PoisonMode poison) noexcept;

struct DoubleFreeTrial {
  TaggedAddress victim{};
  FreeResult second_free;
};

// Random alloc/free interleaving around one victim that is freed twice. No
// allocation between the two frees can land in the victim's slot. All other
// objects are freed before returning.
DoubleFreeTrial inject_double_free(Allocator& heap, std::mt19937_64& rng);

// Child entry point. Returns the exit code when the program survives.
int run_corpus_child(CorpusCase c, const RunConfig& config, std::uint64_t iterations);

struct CorpusTrial {
  bool signaled = false;
  int signal = 0;
  int exit_code = 0;
  std::vector<json> records;
  bool matched = false;
};

struct CorpusSummary {
  CorpusCase corpus_case = CorpusCase::UafReadFirstGranule;
  Expectation expected = Expectation::AbortUaf;
  std::uint64_t trials = 0;
  std::uint64_t matched = 0;
  std::vector<ViolationRecord> violations;
  // tag_bruteforce only.
  std::uint64_t reused = 0;
  std::uint64_t escapes = 0;
  std::optional<double> escape_rate;
  bool ok = false;
  std::string detail;

  json to_json() const;
};

// Runs `trials` children of `exe` (tag_bruteforce: one child looping
// `trials` times).
CorpusSummary run_corpus(CorpusCase c, const RunConfig& config, std::uint64_t trials,
                         const std::string& exe = "/proc/self/exe");

// Name of the hidden subcommand that hosts children.
inline constexpr std::string_view kCorpusChildCommand = "__corpus-child";

}  // namespace tagheap::cli
