#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <vector>

#include "cms/parallel.hpp"
#include "cms/streamgen.hpp"
#include "oracles.hpp"

using cms::BuildPhase;
using cms::BuildProbe;
using cms::CountMinSketch;
using cms::SketchParams;
using cms::SyncMode;

namespace {

std::vector<std::uint32_t> test_stream(std::uint64_t count, std::uint64_t seed) {
    return cms::generate_stream({cms::Distribution::zipf, 1.1, 1u << 14, count, seed});
}

CountMinSketch<> sequential_reference(std::span<const std::uint32_t> stream,
                                      const SketchParams& params, std::uint64_t master_seed) {
    CountMinSketch<> sketch(params, master_seed);
    cms::build_sequential(stream, sketch);
    return sketch;
}

bool counters_equal(const CountMinSketch<>& a, const CountMinSketch<>& b) {
    if (a.depth() != b.depth() || a.width() != b.width()) {
        return false;
    }
    for (std::size_t r = 0; r < a.depth(); ++r) {
        for (std::size_t c = 0; c < a.width(); ++c) {
            if (a.row_counters(r)[c] != b.row_counters(r)[c]) {
                return false;
            }
        }
    }
    return true;
}

} // namespace

TEST_CASE("chunk_range covers the range with contiguous chunks") {
    for (std::size_t count : {0u, 1u, 7u, 1000u, 1024u}) {
        for (unsigned parts : {1u, 2u, 3u, 8u}) {
            std::size_t expected_first = 0;
            for (unsigned i = 0; i < parts; ++i) {
                auto [first, len] = cms::chunk_range(count, parts, i);
                REQUIRE(first == expected_first);
                expected_first += len;
            }
            REQUIRE(expected_first == count);
        }
    }
}

TEST_CASE("partition_rows gives every row exactly one owner") {
    for (std::size_t depth : {1u, 4u, 6u, 8u}) {
        for (unsigned tau : {1u, 2u, 3u, 8u, 12u}) {
            auto parts = cms::partition_rows(depth, tau);
            REQUIRE(parts.size() == tau);
            std::vector<int> owners(depth, 0);
            std::size_t max_rows = 0;
            std::size_t min_rows = depth;
            for (auto [b, e] : parts) {
                for (std::size_t r = b; r < e; ++r) {
                    ++owners[r];
                }
                max_rows = std::max(max_rows, e - b);
                min_rows = std::min(min_rows, e - b);
            }
            for (int o : owners) {
                REQUIRE(o == 1);
            }
            // floor/ceil split: no worker gets two rows more than another.
            REQUIRE(max_rows - min_rows <= 1);
        }
    }
}

TEST_CASE("sequential build matches a scalar recount oracle") {
    auto params = SketchParams::from_error_bounds(1e-3, 0.003); // d=6, w=2003
    auto stream = test_stream(1u << 16, 5);
    auto sketch = sequential_reference(stream, params, 31337);

    auto grid = oracle::recount(stream, sketch.seeds(), static_cast<std::uint32_t>(sketch.width()));
    for (std::size_t r = 0; r < sketch.depth(); ++r) {
        for (std::size_t c = 0; c < sketch.width(); ++c) {
            REQUIRE(std::uint64_t(sketch.row_counters(r)[c]) == grid[r][c]);
        }
    }
    CHECK(sketch.items_processed() == stream.size());
}

TEST_CASE("empty stream leaves the sketch untouched") {
    auto params = SketchParams::from_dimensions(4, 101);
    CountMinSketch<> sketch(params, 1);
    std::vector<std::uint32_t> empty;
    cms::build_sequential(empty, sketch);
    cms::build_buffered(std::span<const std::uint32_t>(empty), sketch, 2, 64);
    CHECK(sketch.items_processed() == 0);
    CHECK(sketch.query(0) == 0);
}

TEST_CASE("three-item stream has row sums of three") {
    auto params = SketchParams::from_dimensions(5, 97);
    CountMinSketch<> sketch(params, 2);
    std::vector<std::uint32_t> stream{42, 42, 7};
    cms::build_sequential(stream, sketch);
    for (std::size_t r = 0; r < sketch.depth(); ++r) {
        std::uint64_t sum = 0;
        for (auto c : sketch.row_counters(r)) {
            sum += c;
        }
        REQUIRE(sum == 3);
    }
}

TEST_CASE("naive parallel with one worker equals sequential in both modes") {
    auto params = SketchParams::from_dimensions(6, 401);
    auto stream = test_stream(20'000, 8);
    auto reference = sequential_reference(stream, params, 9);
    for (auto mode : {SyncMode::synchronized, SyncMode::relaxed}) {
        CountMinSketch<> sketch(params, 9);
        cms::build_naive_parallel(std::span<const std::uint32_t>(stream), sketch, 1, mode);
        CHECK(sketch == reference);
    }
}

TEST_CASE("synchronized naive build is bit-identical to sequential") {
    auto params = SketchParams::from_error_bounds(1e-3, 0.003);
    auto stream = test_stream(1u << 16, 21);
    auto reference = sequential_reference(stream, params, 11);
    CountMinSketch<> sketch(params, 11);
    cms::build_naive_parallel(std::span<const std::uint32_t>(stream), sketch, 4,
                              SyncMode::synchronized);
    CHECK(sketch == reference);
}

TEST_CASE("relaxed naive counters never exceed the sequential ones") {
    auto params = SketchParams::from_error_bounds(1e-3, 0.003);
    auto stream = test_stream(1u << 16, 22);
    auto reference = sequential_reference(stream, params, 12);
    CountMinSketch<> sketch(params, 12);
    cms::build_naive_parallel(std::span<const std::uint32_t>(stream), sketch, 4,
                              SyncMode::relaxed);
    for (std::size_t r = 0; r < sketch.depth(); ++r) {
        std::uint64_t sum = 0;
        for (std::size_t c = 0; c < sketch.width(); ++c) {
            REQUIRE(sketch.row_counters(r)[c] <= reference.row_counters(r)[c]);
            sum += sketch.row_counters(r)[c];
        }
        REQUIRE(sum <= stream.size());
    }
    CHECK(sketch.items_processed() == stream.size());
}

TEST_CASE("multi-table build merges to the sequential result") {
    auto params = SketchParams::from_error_bounds(1e-3, 0.003);
    auto stream = test_stream(1u << 16, 30);
    auto reference = sequential_reference(stream, params, 40);
    for (unsigned tau : {1u, 8u}) {
        auto sketch = cms::build_multi_table(std::span<const std::uint32_t>(stream), params, 40, tau);
        CHECK(sketch == reference);
    }
}

TEST_CASE("buffered build is bit-identical to sequential for any worker count") {
    auto params = SketchParams::from_error_bounds(1e-3, 0.003, cms::WidthMode::prime_after_2_over_eps,
                                                  cms::DepthMode::explicit_rows, 8);
    auto stream = test_stream(1u << 17, 55);
    auto reference = sequential_reference(stream, params, 66);
    for (unsigned tau : {1u, 2u, 4u, 8u}) {
        CountMinSketch<> sketch(params, 66);
        cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, tau, 1024);
        REQUIRE(counters_equal(sketch, reference));
        REQUIRE(sketch == reference);
    }
}

TEST_CASE("buffered handles batch sizes that do not divide the stream") {
    auto params = SketchParams::from_dimensions(6, 211);
    std::vector<std::uint32_t> stream = test_stream(1000, 77);
    auto reference = sequential_reference(stream, params, 88);

    CountMinSketch<> large_batch(params, 88);
    cms::build_buffered(std::span<const std::uint32_t>(stream), large_batch, 4, 1024);
    CHECK(large_batch == reference);

    CountMinSketch<> odd_batch(params, 88);
    cms::build_buffered(std::span<const std::uint32_t>(stream), odd_batch, 3, 7);
    CHECK(odd_batch == reference);

    CountMinSketch<> whole_stream_batch(params, 88);
    cms::build_buffered(std::span<const std::uint32_t>(stream), whole_stream_batch, 1,
                        stream.size());
    CHECK(whole_stream_batch == reference);
}

TEST_CASE("buffered tolerates more workers than rows") {
    auto params = SketchParams::from_dimensions(4, 389);
    auto stream = test_stream(50'000, 91);
    auto reference = sequential_reference(stream, params, 92);
    CountMinSketch<> sketch(params, 92);
    cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 8, 512);
    CHECK(sketch == reference);
}

TEST_CASE("buffered output does not depend on scheduling") {
    auto params = SketchParams::from_dimensions(8, 211);
    auto stream = test_stream(60'000, 14);
    CountMinSketch<> first(params, 3);
    CountMinSketch<> second(params, 3);
    cms::build_buffered(std::span<const std::uint32_t>(stream), first, 4, 256);
    cms::build_buffered(std::span<const std::uint32_t>(stream), second, 4, 256);
    CHECK(first == second);
}

TEST_CASE("no counter update starts while any worker is still hashing") {
    auto params = SketchParams::from_dimensions(8, 509);
    auto stream = test_stream(40'000, 15);

    std::atomic<int> hashing{0};
    std::atomic<bool> overlap{false};
    BuildProbe probe;
    probe.phase_begin = [&](unsigned, std::uint64_t, BuildPhase phase) {
        if (phase == BuildPhase::hash) {
            hashing.fetch_add(1);
        } else if (hashing.load() != 0) {
            overlap.store(true);
        }
    };
    probe.phase_end = [&](unsigned, std::uint64_t, BuildPhase phase) {
        if (phase == BuildPhase::hash) {
            hashing.fetch_sub(1);
        }
    };

    CountMinSketch<> sketch(params, 16);
    cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 4, 512, &probe);
    CHECK_FALSE(overlap.load());
}

TEST_CASE("each row is updated by exactly one worker per batch") {
    auto params = SketchParams::from_dimensions(6, 127);
    auto stream = test_stream(10'000, 17);

    std::mutex mutex;
    std::map<std::pair<std::uint64_t, std::size_t>, std::set<unsigned>> owners;
    std::map<std::size_t, std::uint64_t> items_per_row;
    BuildProbe probe;
    probe.row_pass_begin = [&](unsigned worker, std::uint64_t batch, std::size_t row, std::size_t,
                               std::size_t count) {
        std::lock_guard<std::mutex> lock(mutex);
        owners[{batch, row}].insert(worker);
        items_per_row[row] += count;
    };

    CountMinSketch<> sketch(params, 18);
    cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 4, 512, &probe);

    for (const auto& [key, workers] : owners) {
        REQUIRE(workers.size() == 1);
    }
    for (const auto& [row, items] : items_per_row) {
        REQUIRE(items == stream.size());
    }
}

TEST_CASE("buffered phase times are observable") {
    auto params = SketchParams::from_dimensions(8, 2003);
    auto stream = test_stream(1u << 16, 19);
    CountMinSketch<> sketch(params, 20);
    cms::PhaseTimes times;
    cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 2, 1024, nullptr, &times);
    CHECK(times.hash_seconds > 0.0);
    CHECK(times.update_seconds > 0.0);
}

TEST_CASE("builders reject a zero worker count") {
    auto params = SketchParams::from_dimensions(4, 101);
    CountMinSketch<> sketch(params, 1);
    std::vector<std::uint32_t> stream{1, 2, 3};
    CHECK_THROWS_AS(
        cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 0, 16),
        std::invalid_argument);
    CHECK_THROWS_AS(
        cms::build_buffered(std::span<const std::uint32_t>(stream), sketch, 2, 0),
        std::invalid_argument);
    CHECK_THROWS_AS(cms::build_naive_parallel(std::span<const std::uint32_t>(stream), sketch, 0,
                                              SyncMode::synchronized),
                    std::invalid_argument);
}
