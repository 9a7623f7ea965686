#pragma once

#include <cstdint>
#include <random>

namespace metadapt {

// splitmix64; used to derive independent seeds for named substreams so that
// disabling one consumer (e.g. meta updates) never shifts another's sequence.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x51C64E6B9D1F0A3EULL));
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::uint64_t stream) {
    return std::mt19937_64(derive_seed(base, stream));
}

// Substream tags shared by the trainers; each stochastic consumer owns one,
// so toggling meta updates cannot shift the batch sequences.
namespace stream {
inline constexpr std::uint64_t kInit = 0;
inline constexpr std::uint64_t kEpisode = 1;
inline constexpr std::uint64_t kSourceBatches = 2;
inline constexpr std::uint64_t kTargetBatches = 3;
inline constexpr std::uint64_t kLabeledTargetBatches = 4;
} // namespace stream

} // namespace metadapt
