#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace celm {

using Rng = std::mt19937_64;

constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic generator for a named substream of a root seed.
///
/// Every random decision in a run is drawn from `substream(root, name, ids...)`, so
/// perturbing one component (say the shuffle order) never shifts the draws seen by
/// another (say the partition).
inline Rng substream(std::uint64_t root, std::string_view name, std::initializer_list<std::uint64_t> ids = {}) {
    std::vector<std::uint32_t> words;
    auto push64 = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push64(root);
    push64(fnv1a(name));
    for (auto id : ids) push64(id);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Named substreams of a single experiment seed.
namespace streams {
inline constexpr std::string_view data = "data";
inline constexpr std::string_view test_data = "test-data";
inline constexpr std::string_view partition = "partition";
inline constexpr std::string_view init = "init";
inline constexpr std::string_view shuffle = "shuffle";
inline constexpr std::string_view probe_init = "probe-init";
}  // namespace streams

}  // namespace celm
