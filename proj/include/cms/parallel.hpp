#pragma once
// Shared-memory sketch construction. Three families:
//  - multi-table: one private sketch per worker over a stream slice, merged;
//  - naive single-table: every worker updates the shared grid per item,
//    either with atomic increments or deliberately relaxed ones;
//  - buffered single-table: batches processed in two phases, hash into a
//    column buffer first, then update counters with per-row ownership, so
//    no counter is ever written by two workers.

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "cms/sketch.hpp"

namespace cms {

enum class Strategy {
    sequential,
    multi_table,
    naive_sync,
    naive_relaxed,
    buffered,
    buffered_hetero,
};

enum class SyncMode { synchronized, relaxed };

struct BuildConfig {
    Strategy strategy = Strategy::buffered;
    unsigned tau = 1;
    std::size_t batch = 1024;
};

enum class BuildPhase { hash, update, update_stage2 };

// Test instrumentation. Callbacks fire on worker threads; keep them cheap
// and thread-safe. All fields may be left empty.
struct BuildProbe {
    std::function<void(unsigned worker, std::uint64_t batch, BuildPhase)> phase_begin;
    std::function<void(unsigned worker, std::uint64_t batch, BuildPhase)> phase_end;
    std::function<void(unsigned worker, std::uint64_t batch, std::size_t row, std::size_t first,
                       std::size_t count)>
        row_pass_begin;
    std::function<void(unsigned worker, std::uint64_t batch, std::size_t row, std::size_t first,
                       std::size_t count)>
        row_pass_end;
};

// Wall-clock seconds spent in each phase, measured at the rendezvous points
// so the workers themselves stay undisturbed.
struct PhaseTimes {
    double hash_seconds = 0.0;
    double update_seconds = 0.0;
};

// Per-batch scratch holding the d column ids of each item, with the d
// columns of item j contiguous at item_columns(j). Allocated once per
// build and reused across batches.
class HashBuffer {
  public:
    HashBuffer(std::size_t batch_capacity, std::size_t depth)
        : capacity_(batch_capacity), depth_(depth), slots_(batch_capacity * depth) {
        if (batch_capacity < 1 || depth < 1) {
            throw std::invalid_argument("HashBuffer: capacity and depth must be >= 1");
        }
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t depth() const { return depth_; }

    std::uint32_t* item_columns(std::size_t item) { return slots_.data() + item * depth_; }
    const std::uint32_t* item_columns(std::size_t item) const {
        return slots_.data() + item * depth_;
    }

    std::span<const std::uint32_t> storage() const { return slots_; }

  private:
    std::size_t capacity_;
    std::size_t depth_;
    std::vector<std::uint32_t> slots_;
};

// Contiguous chunk [first, first+count) of `count` items for worker `idx`
// of `parts`; remainders go to the lowest-indexed workers.
inline std::pair<std::size_t, std::size_t> chunk_range(std::size_t count, unsigned parts,
                                                       unsigned idx) {
    const std::size_t base = count / parts;
    const std::size_t rem = count % parts;
    const std::size_t first = idx * base + std::min<std::size_t>(idx, rem);
    return {first, base + (idx < rem ? 1 : 0)};
}

// Row ownership for phase 2: worker i owns rows [out[i].first, out[i].second).
// Every row has exactly one owner; workers beyond the row count get empty
// ranges and only participate in hashing.
inline std::vector<std::pair<std::size_t, std::size_t>> partition_rows(std::size_t depth,
                                                                       unsigned tau) {
    if (tau < 1) {
        throw std::invalid_argument("partition_rows: tau must be >= 1");
    }
    std::vector<std::pair<std::size_t, std::size_t>> out(tau);
    for (unsigned i = 0; i < tau; ++i) {
        auto [first, count] = chunk_range(depth, tau, i);
        out[i] = {first, first + count};
    }
    return out;
}

template <std::unsigned_integral Counter>
void build_sequential(std::span<const std::uint32_t> stream, CountMinSketch<Counter>& sketch) {
    for (std::uint32_t item : stream) {
        sketch.insert(item);
    }
}

namespace detail {

// Saturating increment through atomic_ref; returns true if the cell was
// already at its ceiling.
template <typename Counter>
bool atomic_bump(Counter& cell) {
    std::atomic_ref<Counter> ref(cell);
    Counter current = ref.load(std::memory_order_relaxed);
    for (;;) {
        if (current == std::numeric_limits<Counter>::max()) {
            return true;
        }
        if (ref.compare_exchange_weak(current, current + 1, std::memory_order_relaxed)) {
            return false;
        }
    }
}

// Unsynchronized increment, expressed as a relaxed load/store pair so
// concurrent updates lose increments instead of invoking undefined
// behaviour. Word-sized stores cannot tear, hence counters never exceed
// the race-free count.
template <typename Counter>
bool relaxed_bump(Counter& cell) {
    std::atomic_ref<Counter> ref(cell);
    const Counter current = ref.load(std::memory_order_relaxed);
    if (current == std::numeric_limits<Counter>::max()) {
        return true;
    }
    ref.store(current + 1, std::memory_order_relaxed);
    return false;
}

} // namespace detail

// One worker per stream slice, all workers update the shared grid per item.
// synchronized: indivisible increments, counters match build_sequential
// bit for bit. relaxed: increments may be lost to races; counters are
// pointwise <= the sequential result.
template <std::unsigned_integral Counter>
void build_naive_parallel(std::span<const std::uint32_t> stream, CountMinSketch<Counter>& sketch,
                          unsigned tau, SyncMode mode) {
    static_assert(std::atomic_ref<Counter>::is_always_lock_free);
    if (tau < 1) {
        throw std::invalid_argument("build_naive_parallel: tau must be >= 1");
    }
    const std::size_t depth = sketch.depth();
    const std::uint32_t width = static_cast<std::uint32_t>(sketch.width());
    std::atomic<bool> saturated{false};

    auto work = [&](unsigned id) {
        std::uint32_t hashes[SketchParams::kMaxDepth];
        auto [first, count] = chunk_range(stream.size(), tau, id);
        bool local_saturated = false;
        for (std::size_t i = first; i < first + count; ++i) {
            sketch.table().hash(stream[i], hashes);
            for (std::size_t r = 0; r < depth; ++r) {
                Counter& cell = sketch.row(r)[hashes[r] % width];
                const bool hit_ceiling = mode == SyncMode::synchronized
                                             ? detail::atomic_bump(cell)
                                             : detail::relaxed_bump(cell);
                local_saturated = local_saturated || hit_ceiling;
            }
        }
        if (local_saturated) {
            saturated.store(true, std::memory_order_relaxed);
        }
    };

    std::vector<std::jthread> workers;
    workers.reserve(tau - 1);
    for (unsigned id = 1; id < tau; ++id) {
        workers.emplace_back(work, id);
    }
    work(0);
    workers.clear();

    sketch.note_inserted(stream.size());
    if (saturated.load()) {
        sketch.note_saturated();
    }
}

// One private sketch per worker over a disjoint stream slice, same hash
// seeds everywhere, summed at the end. Uses tau times the counter memory.
template <std::unsigned_integral Counter = std::uint32_t>
CountMinSketch<Counter> build_multi_table(std::span<const std::uint32_t> stream,
                                          const SketchParams& params, std::uint64_t master_seed,
                                          unsigned tau) {
    if (tau < 1) {
        throw std::invalid_argument("build_multi_table: tau must be >= 1");
    }
    CountMinSketch<Counter> result(params, master_seed);
    std::vector<CountMinSketch<Counter>> partials(tau, result);

    std::vector<std::jthread> workers;
    workers.reserve(tau - 1);
    auto work = [&](unsigned id) {
        auto [first, count] = chunk_range(stream.size(), tau, id);
        build_sequential(stream.subspan(first, count), partials[id]);
    };
    for (unsigned id = 1; id < tau; ++id) {
        workers.emplace_back(work, id);
    }
    work(0);
    workers.clear();

    for (const auto& partial : partials) {
        result.merge_from(partial);
    }
    return result;
}

// Buffered two-phase construction. Per batch: phase 1 hashes a disjoint
// item slice per worker into the column buffer, a full rendezvous, then
// phase 2 applies counter updates with rows partitioned among workers.
// Output is bit-identical to build_sequential for any tau.
template <std::unsigned_integral Counter>
void build_buffered(std::span<const std::uint32_t> stream, CountMinSketch<Counter>& sketch,
                    unsigned tau, std::size_t batch_size, const BuildProbe* probe = nullptr,
                    PhaseTimes* times = nullptr) {
    if (tau < 1) {
        throw std::invalid_argument("build_buffered: tau must be >= 1");
    }
    if (batch_size < 1) {
        throw std::invalid_argument("build_buffered: batch size must be >= 1");
    }
    const std::size_t depth = sketch.depth();
    const std::uint32_t width = static_cast<std::uint32_t>(sketch.width());
    const std::size_t total = stream.size();
    if (total == 0) {
        return;
    }

    HashBuffer buffer(batch_size, depth);
    const auto rows = partition_rows(depth, tau);

    PhaseTimes measured;
    auto mark = std::chrono::steady_clock::now();
    bool closing_hash_phase = true;
    std::barrier rendezvous(tau, [&]() noexcept {
        const auto now = std::chrono::steady_clock::now();
        const double dt = std::chrono::duration<double>(now - mark).count();
        (closing_hash_phase ? measured.hash_seconds : measured.update_seconds) += dt;
        closing_hash_phase = !closing_hash_phase;
        mark = now;
    });

    std::atomic<bool> saturated{false};

    auto work = [&](unsigned id) {
        std::uint32_t hashes[SketchParams::kMaxDepth];
        const auto [row_begin, row_end] = rows[id];
        bool local_saturated = false;
        std::uint64_t batch_index = 0;
        for (std::size_t offset = 0; offset < total; offset += batch_size, ++batch_index) {
            const std::size_t len = std::min(batch_size, total - offset);

            // Phase 1: merged hashing into the buffer, static item chunks.
            auto [first, count] = chunk_range(len, tau, id);
            if (probe && probe->phase_begin) {
                probe->phase_begin(id, batch_index, BuildPhase::hash);
            }
            for (std::size_t j = first; j < first + count; ++j) {
                sketch.table().hash(stream[offset + j], hashes);
                std::uint32_t* columns = buffer.item_columns(j);
                for (std::size_t r = 0; r < depth; ++r) {
                    columns[r] = hashes[r] % width;
                }
            }
            if (probe && probe->phase_end) {
                probe->phase_end(id, batch_index, BuildPhase::hash);
            }

            rendezvous.arrive_and_wait();

            // Phase 2: counter updates, each row touched by its owner only.
            if (probe && probe->phase_begin) {
                probe->phase_begin(id, batch_index, BuildPhase::update);
            }
            if (row_begin < row_end) {
                if (probe && probe->row_pass_begin) {
                    for (std::size_t r = row_begin; r < row_end; ++r) {
                        probe->row_pass_begin(id, batch_index, r, 0, len);
                    }
                }
                for (std::size_t j = 0; j < len; ++j) {
                    const std::uint32_t* columns = buffer.item_columns(j);
                    for (std::size_t r = row_begin; r < row_end; ++r) {
                        Counter& cell = sketch.row(r)[columns[r]];
                        if (cell == std::numeric_limits<Counter>::max()) {
                            local_saturated = true;
                        } else {
                            ++cell;
                        }
                    }
                }
                if (probe && probe->row_pass_end) {
                    for (std::size_t r = row_begin; r < row_end; ++r) {
                        probe->row_pass_end(id, batch_index, r, 0, len);
                    }
                }
            }
            if (probe && probe->phase_end) {
                probe->phase_end(id, batch_index, BuildPhase::update);
            }

            rendezvous.arrive_and_wait();
        }
        if (local_saturated) {
            saturated.store(true, std::memory_order_relaxed);
        }
    };

    std::vector<std::jthread> workers;
    workers.reserve(tau - 1);
    for (unsigned id = 1; id < tau; ++id) {
        workers.emplace_back(work, id);
    }
    work(0);
    workers.clear();

    sketch.note_inserted(total);
    if (saturated.load()) {
        sketch.note_saturated();
    }
    if (times) {
        *times = measured;
    }
}

} // namespace cms
