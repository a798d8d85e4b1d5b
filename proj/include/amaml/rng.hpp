#pragma once

#include <cstdint>
#include <random>

namespace amaml {

/// splitmix64 finalizer (Vigna). Good avalanche, cheap, stateless.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed stream from a master seed and a label tuple.
/// Each label is folded in with splitmix64, so distinct tuples give distinct
/// streams; this is what makes task sampling independent of thread schedule.
template <class... Labels>
constexpr std::uint64_t derive_seed(std::uint64_t master, Labels... labels) {
  std::uint64_t s = splitmix64(master ^ 0x5851f42d4c957f2dULL);
  ((s = splitmix64(s ^ static_cast<std::uint64_t>(labels))), ...);
  return s;
}

template <class... Labels>
std::mt19937_64 make_rng(std::uint64_t master, Labels... labels) {
  return std::mt19937_64(derive_seed(master, labels...));
}

/// Top-level stream labels; combined with per-use indices (iteration, slot).
enum Stream : std::uint64_t {
  kStreamInit = 1,
  kStreamMetaTask = 2,
  kStreamTestTask = 3,
  kStreamCfSplit = 4,
  kStreamBench = 5,
  kStreamGradCheck = 6,
};

}  // namespace amaml
