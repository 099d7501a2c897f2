#include "tagheap/cli/selftest.hpp"

#include <atomic>
#include <cstring>
#include <random>
#include <sstream>
#include <thread>

#include "tagheap/cli/corpus.hpp"

namespace tagheap::cli {

namespace {

SelftestResult alias_coherence(const RunConfig& config) {
  HeapRegion region = HeapRegion::reserve(config.layout(), config.page_size);
  region.commit_page(0);
  const PointerLayout& l = region.layout();
  const std::uint64_t tags = l.tag_count();
  std::mt19937_64 rng(config.seed);
  std::uint64_t failures = 0, pairs = 0;
  for (std::uint64_t w = 0; w < tags; ++w) {
    for (std::uint64_t r = 0; r < tags; ++r) {
      const std::uint64_t off = rng() % (config.page_size - 8);
      const std::uint64_t pattern = rng();
      std::memcpy(encode(l, off, Tag{static_cast<std::uint8_t>(w)}).as(), &pattern, 8);
      std::uint64_t got = 0;
      std::memcpy(&got, encode(l, off, Tag{static_cast<std::uint8_t>(r)}).as(), 8);
      if (got != pattern) ++failures;
      ++pairs;
    }
  }
  return {"alias_coherence", failures == 0,
          std::to_string(pairs) + " write/read tag pairs, " + std::to_string(failures) + " mismatches"};
}

SelftestResult roundtrip(const RunConfig& config) {
  PointerLayout l = config.layout();
  l.prefix_value = std::uint64_t{1} << l.prefix_shift();
  std::mt19937_64 rng(config.seed);
  std::uint64_t failures = 0;
  constexpr int kTrials = 100000;
  for (int i = 0; i < kTrials; ++i) {
    const std::uint64_t suffix = rng() & l.suffix_mask();
    const Tag tag{static_cast<std::uint8_t>(rng() % l.tag_count())};
    const TaggedAddress a = encode(l, suffix, tag);
    if (!is_heap(l, a) || decode_tag(l, a) != tag || suffix_of(l, a) != suffix ||
        canonicalize(l, a) != encode(l, suffix, Tag{0}) || shadow_index(l, a) != suffix / l.granule_size) {
      ++failures;
    }
  }
  return {"pointer_roundtrip", failures == 0,
          std::to_string(kTrials) + " encode/decode trials, " + std::to_string(failures) + " failures"};
}

SelftestResult shadow_consistency(const RunConfig& config) {
  auto heap = Allocator::create(config.layout(), config.page_size, config.allocator_config());
  const PointerLayout& l = heap->layout();
  const std::uint8_t freed = freed_sentinel(l);
  std::mt19937_64 rng(config.seed);
  std::uint64_t failures = 0;
  std::vector<std::pair<TaggedAddress, std::size_t>> live;
  for (int i = 0; i < 2000; ++i) {
    const std::size_t size = 1 + rng() % 1024;
    const TaggedAddress p = heap->alloc(size);
    const std::uint64_t g0 = shadow_index(l, p);
    for (std::uint64_t g = g0; g < g0 + (size + 15) / 16; ++g) {
      if (heap->shadow().at(g) != decode_tag(l, p).value) ++failures;
    }
    live.emplace_back(p, size);
    if (rng() % 2 == 0) {
      const std::size_t k = rng() % live.size();
      const auto [q, qsize] = live[k];
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
      if (!heap->free(q).ok()) ++failures;
      const std::uint64_t gq = shadow_index(l, q);
      if (heap->shadow().at(gq) != freed) ++failures;
      if (config.poison == PoisonMode::WholeAllocation) {
        for (std::uint64_t g = gq; g < gq + (qsize + 15) / 16; ++g) {
          if (heap->shadow().at(g) != freed) ++failures;
        }
      }
    }
  }
  const AllocatorStats s = heap->stats();
  if (s.shadow_bytes_committed * 16 != s.heap_bytes_committed) ++failures;
  return {"shadow_consistency", failures == 0, std::to_string(failures) + " shadow mismatches"};
}

SelftestResult double_free(const RunConfig& config) {
  auto heap = Allocator::create(config.layout(), config.page_size, config.allocator_config());
  std::mt19937_64 rng(config.seed);
  constexpr int kTrials = 1000;
  int detected = 0;
  for (int i = 0; i < kTrials; ++i) {
    if (inject_double_free(*heap, rng).second_free.status == FreeStatus::DoubleFree) ++detected;
  }
  return {"double_free_determinism", detected == kTrials,
          std::to_string(detected) + "/" + std::to_string(kTrials) + " double frees detected"};
}

SelftestResult mapping_fanout(const RunConfig& config) {
  CountingMemory os;
  HeapRegion region = HeapRegion::reserve(config.layout(), config.page_size, os);
  os.reset();
  constexpr std::uint64_t kPages = 4;
  for (std::uint64_t p = 0; p < kPages; ++p) region.commit_page(p);
  const std::uint64_t expected = kPages << config.tag_bits;
  const std::uint64_t got = os.counts().map_shared;
  return {"mapping_fanout", got == expected,
          std::to_string(got) + " mapping calls for " + std::to_string(kPages) + " commits (expected " +
              std::to_string(expected) + ")"};
}

}  // namespace

std::vector<SelftestResult> run_selftest(const RunConfig& config) {
  return {alias_coherence(config), roundtrip(config), shadow_consistency(config), double_free(config),
          mapping_fanout(config)};
}

json run_stress(const RunConfig& config, const StressOptions& options) {
  auto heap = Allocator::create(config.layout(), config.page_size, config.allocator_config());
  const Checker checker(*heap, config.checker_config());
  std::vector<std::atomic<std::uint64_t>> slots(options.slots);
  std::atomic<bool> done{false};

  std::thread mutator([&] {
    std::mt19937_64 rng(config.seed);
    std::vector<TaggedAddress> owned(options.slots);
    for (std::uint64_t i = 0; i < options.ops; ++i) {
      const std::size_t k = rng() % options.slots;
      if (owned[k].raw != 0) {
        slots[k].store(0, std::memory_order_release);
        heap->free(owned[k]);
      }
      owned[k] = heap->alloc(16 + rng() % 240);
      slots[k].store(owned[k].raw, std::memory_order_release);
    }
    done.store(true, std::memory_order_release);
    for (auto& p : owned) {
      if (p.raw != 0) heap->free(p);
    }
  });

  std::uint64_t checks = 0, passed = 0, flagged = 0, stale_handles = 0;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  while (!done.load(std::memory_order_acquire)) {
    const std::uint64_t raw = slots[rng() % options.slots].load(std::memory_order_acquire);
    if (raw == 0) continue;
    ++checks;
    // Only the verdict is taken: reading through a pointer the mutator may
    // have freed and decommitted meanwhile is outside the contract.
    const auto v = checker.validate(TaggedAddress{raw});
    if (const auto* h = std::get_if<ValidatedHandle>(&v)) {
      ++passed;
      if (!checker.is_current(*h)) ++stale_handles;
    } else {
      ++flagged;
    }
  }
  mutator.join();

  const AllocatorStats s = heap->stats();
  return {{"type", "stress"},
          {"schema_version", kSchemaVersion},
          {"config", to_json(config)},
          {"ops", options.ops},
          {"checks", checks},
          {"passed", passed},
          {"flagged", flagged},
          {"stale_handles", stale_handles},
          {"allocations", s.allocations},
          {"frees", s.frees},
          {"double_free_detections", s.double_free_detections}};
}

}  // namespace tagheap::cli
