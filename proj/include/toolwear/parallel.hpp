#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace toolwear {

// Worker count: TOOLWEAR_THREADS when set (>= 1), otherwise hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
// write results into per-index slots so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Deterministic generator for a (seed, tag...) tuple.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a = 0,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace toolwear

namespace toolwear {

// Keeps large tensors on the heap instead of fresh mmap pages between
// training steps. Call once at program start.
void tune_allocator();

}  // namespace toolwear
