#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace zeroreg {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; combines a base seed with stream tags so that
/// independent consumers (scales, keypoints, pairs) get decorrelated streams.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename... Tags>
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
  return mix_seed(mix_seed(seed, tag), static_cast<std::uint64_t>(rest)...);
}

/// k distinct indices drawn uniformly from [0, n), returned ascending.
inline std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace zeroreg
