#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace heartsteps {

/// Deterministic child seed for a path of integers below a master seed, via
/// std::seed_seq. Distinct paths give independent-looking streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * path.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffULL));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (std::uint64_t p : path) push(p);
    std::seed_seq seq(words.begin(), words.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace heartsteps
