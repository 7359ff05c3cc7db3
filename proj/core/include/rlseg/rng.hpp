#pragma once

#include <cstdint>
#include <string_view>

namespace rlseg {

// FNV-1a over arbitrary bytes; also used as the file checksum.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ull);

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(s.data(), s.size());
}

// One splitmix64 step; good enough to decorrelate derived seeds.
std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic per-purpose seed: hash(global_seed, tag). Every random draw
// in the toolkit flows from one global seed through this function.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view tag);

}  // namespace rlseg
