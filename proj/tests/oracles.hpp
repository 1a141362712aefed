#pragma once
// Reference implementations kept deliberately independent of the library's
// hot paths: a plain-loop tabulation lookup over a 2-D array and a scalar
// per-item recount of what a sketch's counter grid must contain. Tests
// compare the optimized code against these.

#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

// Same splitmix64 contract the library documents, written out separately.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct RefTabulation {
    std::uint32_t table[4][256];

    explicit RefTabulation(std::uint64_t seed) {
        std::uint64_t state = seed;
        for (int c = 0; c < 4; ++c) {
            for (int v = 0; v < 256; ++v) {
                table[c][v] = static_cast<std::uint32_t>(splitmix64_next(state));
            }
        }
    }

    std::uint32_t hash(std::uint32_t x) const {
        std::uint32_t out = 0;
        for (int c = 0; c < 4; ++c) {
            out ^= table[c][(x >> (8 * c)) & 0xFF];
        }
        return out;
    }
};

// Counter grid a sequential construction must reach: one scalar loop, no
// batching, no merging, no builder code.
inline std::vector<std::vector<std::uint64_t>> recount(std::span<const std::uint32_t> stream,
                                                       std::span<const std::uint64_t> seeds,
                                                       std::uint32_t width) {
    std::vector<RefTabulation> tables;
    tables.reserve(seeds.size());
    for (std::uint64_t s : seeds) {
        tables.emplace_back(s);
    }
    std::vector<std::vector<std::uint64_t>> grid(seeds.size(),
                                                 std::vector<std::uint64_t>(width, 0));
    for (std::uint32_t item : stream) {
        for (std::size_t r = 0; r < seeds.size(); ++r) {
            ++grid[r][tables[r].hash(item) % width];
        }
    }
    return grid;
}

} // namespace oracle
