#pragma once

// Seed derivation and RNG conventions used across the project.
//
// Every random decision in the pipeline is drawn from an mt19937_64 stream
// whose seed is *derived* from a base seed plus one or more stream tags
// (graph index, cell index, purpose tag, ...). Deriving instead of sharing
// one stream is what makes parallel generation independent of thread count:
// worker k can produce item i's stream without having consumed items 0..i-1.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace alignlab {

using Rng = std::mt19937_64;

// SplitMix64 step (Steele et al.); good avalanche, cheap, stateless per call.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Folds a base seed and any number of stream tags into one well-mixed seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t state = 0x243f6a8885a308d3ULL;  // pi digits; arbitrary fixed salt
  std::uint64_t out = 0;
  for (std::uint64_t p : parts) {
    state ^= p + 0x9e3779b97f4a7c15ULL + (out << 6) + (out >> 2);
    out = splitmix64(state);
  }
  return out;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) {
  return Rng(derive_seed(parts));
}

// Small fixed tags distinguishing the independent random streams hanging off
// one experiment seed. Values are arbitrary but frozen: changing them changes
// every derived stream.
namespace stream {
inline constexpr std::uint64_t kGraphTopology = 0x67726170ULL;   // "grap"
inline constexpr std::uint64_t kGraphFeatures = 0x66656174ULL;   // "feat"
inline constexpr std::uint64_t kNoise = 0x6e6f6973ULL;           // "nois"
inline constexpr std::uint64_t kInit = 0x696e6974ULL;            // "init"
inline constexpr std::uint64_t kShuffle = 0x73687566ULL;         // "shuf"
inline constexpr std::uint64_t kProbeSubset = 0x70726f62ULL;     // "prob"
inline constexpr std::uint64_t kVision = 0x76697369ULL;          // "visi"
}  // namespace stream

}  // namespace alignlab
