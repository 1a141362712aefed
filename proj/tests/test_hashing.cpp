#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cms/prng.hpp"
#include "cms/tabulation.hpp"
#include "oracles.hpp"

using cms::MergedTabulationTable;
using cms::TabulationTable;

namespace {

std::vector<std::uint32_t> random_keys(std::size_t n, std::uint64_t seed) {
    cms::SplitMix64 rng(seed);
    std::vector<std::uint32_t> keys(n);
    for (auto& k : keys) {
        k = rng.next_u32();
    }
    return keys;
}

std::vector<std::uint32_t> zero_entries(std::size_t depth) {
    return std::vector<std::uint32_t>(4 * 256 * depth, 0);
}

} // namespace

TEST_CASE("table construction is a deterministic function of the seed") {
    TabulationTable a(0xfeedface12345678ULL);
    TabulationTable b(0xfeedface12345678ULL);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < 256; ++v) {
            REQUIRE(a.entry(c, v) == b.entry(c, v));
        }
    }
}

TEST_CASE("distinct seeds give distinct tables") {
    cms::SplitMix64 seeder(99);
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t s1 = seeder.next();
        const std::uint64_t s2 = seeder.next();
        REQUIRE(s1 != s2);
        TabulationTable a(s1);
        TabulationTable b(s2);
        bool differ = false;
        for (std::size_t c = 0; c < 4 && !differ; ++c) {
            for (std::size_t v = 0; v < 256 && !differ; ++v) {
                differ = a.entry(c, v) != b.entry(c, v);
            }
        }
        CHECK(differ);
    }
}

TEST_CASE("all-zero injected table hashes everything to zero") {
    auto t = TabulationTable::from_entries(zero_entries(1));
    CHECK(t.hash(0) == 0);
    CHECK(t.hash(0xdeadbeef) == 0);
    CHECK(t.hash(0xFFFFFFFF) == 0);
}

TEST_CASE("hash is the xor of the four per-byte entries") {
    // entry[c][v] = v, so hash(0x01020304) = 0x04 ^ 0x03 ^ 0x02 ^ 0x01 = 4.
    std::vector<std::uint32_t> entries(4 * 256);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < 256; ++v) {
            entries[c * 256 + v] = static_cast<std::uint32_t>(v);
        }
    }
    auto t = TabulationTable::from_entries(entries);
    CHECK(t.hash(0x01020304u) == 0x00000004u);
}

TEST_CASE("hash matches the reference lookup on 2^16 random keys") {
    const std::uint64_t seed = 0x5eed0001;
    TabulationTable t(seed);
    oracle::RefTabulation ref(seed);
    for (std::uint32_t x : random_keys(1u << 16, 7)) {
        REQUIRE(t.hash(x) == ref.hash(x));
    }
}

TEST_CASE("merged table rejects an empty seed list") {
    std::vector<std::uint64_t> none;
    CHECK_THROWS_AS(MergedTabulationTable{std::span<const std::uint64_t>(none)},
                    std::invalid_argument);
}

TEST_CASE("merged table of depth 1 reproduces the single table") {
    const std::uint64_t seed = 42;
    std::vector<std::uint64_t> seeds{seed};
    MergedTabulationTable m{std::span<const std::uint64_t>(seeds)};
    TabulationTable t(seed);
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < 256; ++v) {
            REQUIRE(m.entry(c, v, 0) == t.entry(c, v));
        }
    }
    for (std::uint32_t x : random_keys(256, 3)) {
        REQUIRE(m.hash(x) == std::vector<std::uint32_t>{t.hash(x)});
    }
}

TEST_CASE("merged layout interleaves the source tables exactly") {
    std::vector<std::uint64_t> seeds{11, 22, 33, 44};
    MergedTabulationTable m{std::span<const std::uint64_t>(seeds)};
    std::vector<TabulationTable> singles;
    for (std::uint64_t s : seeds) {
        singles.emplace_back(s);
    }
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < 256; ++v) {
            for (std::size_t j = 0; j < seeds.size(); ++j) {
                REQUIRE(m.entry(c, v, j) == singles[j].entry(c, v));
            }
        }
    }
}

TEST_CASE("equal seeds make the merged entry independent of the function index") {
    std::vector<std::uint64_t> seeds(5, 777);
    MergedTabulationTable m{std::span<const std::uint64_t>(seeds)};
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t v = 0; v < 256; ++v) {
            for (std::size_t j = 1; j < seeds.size(); ++j) {
                REQUIRE(m.entry(c, v, j) == m.entry(c, v, 0));
            }
        }
    }
}

TEST_CASE("merged hash equals d naive hashes elementwise") {
    for (std::size_t d : {std::size_t(1), std::size_t(4), std::size_t(8)}) {
        cms::SplitMix64 seeder(d);
        std::vector<std::uint64_t> seeds(d);
        for (auto& s : seeds) {
            s = seeder.next();
        }
        MergedTabulationTable m{std::span<const std::uint64_t>(seeds)};
        std::vector<oracle::RefTabulation> refs;
        for (std::uint64_t s : seeds) {
            refs.emplace_back(s);
        }
        std::vector<std::uint32_t> out(d);
        for (std::uint32_t x : random_keys(1u << 16, 0xabc + d)) {
            m.hash(x, out.data());
            for (std::size_t j = 0; j < d; ++j) {
                REQUIRE(out[j] == refs[j].hash(x));
            }
        }
    }
}

TEST_CASE("zero-injected merged table hashes to all zeros") {
    auto m = MergedTabulationTable::from_entries(3, zero_entries(3));
    auto out = m.hash(0x12345678u);
    CHECK(out == std::vector<std::uint32_t>{0, 0, 0});
}

TEST_CASE("to_column reduces modulo the width") {
    CHECK(cms::to_column(0, 17) == 0);
    CHECK(cms::to_column(2003, 2003) == 0);
    // 0xFFFFFFFF = 2003 * 2144267 + 494
    CHECK(cms::to_column(0xFFFFFFFFu, 2003) == 494);
    CHECK_THROWS_AS(cms::to_column(1, 0), std::invalid_argument);
}

TEST_CASE("output bytes carry close to 8 bits of entropy") {
    TabulationTable t(0x0123456789abcdefULL);
    std::array<std::array<std::uint64_t, 256>, 4> histogram{};
    cms::SplitMix64 rng(5);
    const std::size_t samples = 1'000'000;
    for (std::size_t i = 0; i < samples; ++i) {
        const std::uint32_t h = t.hash(rng.next_u32());
        for (int b = 0; b < 4; ++b) {
            ++histogram[b][(h >> (8 * b)) & 0xFF];
        }
    }
    for (int b = 0; b < 4; ++b) {
        double entropy = 0.0;
        for (std::uint64_t count : histogram[b]) {
            if (count == 0) {
                continue;
            }
            const double p = static_cast<double>(count) / static_cast<double>(samples);
            entropy -= p * std::log2(p);
        }
        CHECK(entropy >= 7.9);
    }
}
