#pragma once
// Fast/slow worker pairing for the buffered build. Each pair owns two
// sketch rows per batch and processes them in two stages: stage 1, fast
// worker on the even row, slow worker on the odd row; stage 2, rows
// swapped, each resuming from the item its mate stopped at. Batch shares
// are rebalanced from measured stage times and frozen once stable.
// Heterogeneity can be emulated with a per-item busy loop so the scheme
// is testable on homogeneous desk machines.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "cms/parallel.hpp"

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif
#include <ctime>

namespace cms {

struct BalancerOptions {
    // Speed samples kept for smoothing. A quarter of a full window is
    // trimmed from each end before averaging.
    std::size_t window = 4;
    std::size_t freeze_after = 30; // rebalances before the split is frozen
    std::size_t history = 8;       // recent splits kept; the freeze value is their mean
    // A sample whose throughput drops below 1/outlier_factor of the
    // window average is a preemption artifact, not a speed change, and is
    // discarded; outlier_streak rejections in a row mean the slowdown is
    // real and the next sample is taken at face value. Genuine batch-to-
    // batch variation sits within a few percent, preemption hits start
    // around 2x, so 1.3 separates the two cleanly.
    double outlier_factor = 1.3;
    std::size_t outlier_streak = 2;
};

// Tracks the fast/slow item split of a fixed per-batch budget and adjusts
// it from measured stage durations: with speeds s_F = fast/t_F and
// s_S = slow/t_S, shift x = (s_F*slow - s_S*fast) / (s_F + s_S) items to
// the fast worker so both stages finish together.
class BatchBalancer {
  public:
    explicit BatchBalancer(std::size_t budget, BalancerOptions options = {})
        : budget_(budget), options_(options) {
        if (budget < 2) {
            throw std::invalid_argument("BatchBalancer: budget must be >= 2");
        }
        fast_ = budget / 2;
        slow_ = budget - fast_;
    }

    std::size_t budget() const { return budget_; }
    std::size_t fast_share() const { return fast_; }
    std::size_t slow_share() const { return slow_; }
    double f2s() const { return static_cast<double>(fast_) / static_cast<double>(slow_); }
    bool frozen() const { return frozen_; }
    std::size_t updates() const { return updates_; }

    // Applies one rebalance from the measured durations of the two stage
    // halves. Returns the computed (unrounded) shift x; a discarded
    // outlier sample returns 0 and leaves the split untouched.
    double update(double t_fast, double t_slow) {
        if (frozen_) {
            throw std::logic_error("BatchBalancer: update after freeze");
        }
        if (!(t_fast > 0.0) || !(t_slow > 0.0)) {
            throw std::invalid_argument("BatchBalancer: stage times must be positive");
        }
        const double v_fast = static_cast<double>(fast_) / t_fast;
        const double v_slow = static_cast<double>(slow_) / t_slow;
        // Preemption inflates a stage time without saying so; gate out
        // samples whose throughput collapses against recent history.
        if (!speed_window_.empty() && rejected_streak_ < options_.outlier_streak) {
            if (v_fast * options_.outlier_factor < window_speed(true) ||
                v_slow * options_.outlier_factor < window_speed(false)) {
                ++rejected_streak_;
                return 0.0;
            }
        }
        rejected_streak_ = 0;
        // Average per-batch speeds over the window; sizes move between
        // batches, so averaging raw times would mix regimes. A full
        // window also has its extremes trimmed, so milder measurement
        // noise cannot steer the split either.
        speed_window_.push_back({v_fast, v_slow});
        if (speed_window_.size() > options_.window) {
            speed_window_.pop_front();
        }
        const double s_fast = window_speed(true);
        const double s_slow = window_speed(false);

        const double x = (s_fast * static_cast<double>(slow_) -
                          s_slow * static_cast<double>(fast_)) /
                         (s_fast + s_slow);
        apply_shift(static_cast<long long>(std::nearbyint(x)));

        history_.push_back({fast_, slow_});
        if (history_.size() > options_.history) {
            history_.pop_front();
        }
        ++updates_;
        if (updates_ >= options_.freeze_after) {
            freeze_to_history_mean();
        }
        return x;
    }

  private:
    struct SpeedSample {
        double fast;
        double slow;
    };
    struct Split {
        std::size_t fast;
        std::size_t slow;
    };

    double window_speed(bool fast_half) const {
        std::vector<double> samples;
        samples.reserve(speed_window_.size());
        for (const auto& s : speed_window_) {
            samples.push_back(fast_half ? s.fast : s.slow);
        }
        std::sort(samples.begin(), samples.end());
        // From three samples up, at least the extremes go (median of 3).
        const std::size_t trim =
            samples.size() >= 3 ? std::max<std::size_t>(1, samples.size() / 4) : 0;
        const std::size_t first = trim;
        const std::size_t last = samples.size() - trim;
        double sum = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            sum += samples[i];
        }
        return sum / static_cast<double>(last - first);
    }

    void apply_shift(long long step) {
        long long fast = static_cast<long long>(fast_) + step;
        fast = std::max<long long>(1, std::min<long long>(fast, static_cast<long long>(budget_) - 1));
        fast_ = static_cast<std::size_t>(fast);
        slow_ = budget_ - fast_;
    }

    void freeze_to_history_mean() {
        double mean_fast = 0.0;
        for (const auto& h : history_) {
            mean_fast += static_cast<double>(h.fast);
        }
        mean_fast /= static_cast<double>(history_.size());
        apply_shift(static_cast<long long>(std::nearbyint(mean_fast)) -
                    static_cast<long long>(fast_));
        frozen_ = true;
    }

    std::size_t budget_;
    BalancerOptions options_;
    std::size_t fast_ = 0;
    std::size_t slow_ = 0;
    std::deque<SpeedSample> speed_window_;
    std::deque<Split> history_;
    std::size_t updates_ = 0;
    std::size_t rejected_streak_ = 0;
    bool frozen_ = false;
};

struct StageAssignment {
    std::size_t row;
    std::size_t first; // [first, last)
    std::size_t last;
};

// Item ranges for one fast/slow pair over one batch. Per row the two
// stages cover [0, budget) exactly once.
struct PairSchedule {
    std::size_t budget;
    std::size_t fast_items;
    std::size_t slow_items;
    std::size_t fast_row;
    std::size_t slow_row;

    StageAssignment fast_stage1() const { return {fast_row, 0, fast_items}; }
    StageAssignment slow_stage1() const { return {slow_row, 0, slow_items}; }
    // Stage 2: rows swap; each worker resumes where its mate stopped.
    StageAssignment fast_stage2() const { return {slow_row, slow_items, budget}; }
    StageAssignment slow_stage2() const { return {fast_row, fast_items, budget}; }
};

inline PairSchedule pair_schedule(std::size_t budget, std::size_t fast_items,
                                  std::size_t slow_items, std::size_t fast_row) {
    if (fast_items + slow_items != budget) {
        throw std::invalid_argument("pair_schedule: shares must sum to the batch budget");
    }
    return {budget, fast_items, slow_items, fast_row, fast_row + 1};
}

// Emulated heterogeneity: every worker runs work_units rounds of a serial
// mixing loop per item, slow workers factor times as many. The synthetic
// work dominates the real per-item cost, so measured speed ratios land
// near `factor` regardless of host hardware. factor == 1 with zero units
// disables emulation entirely.
struct SlowdownModel {
    double factor = 1.0;
    std::uint32_t work_units = 0; // 0 = pick a default when factor > 1

    // Sized so the synthetic work dwarfs the real per-item cost (ratio
    // lands near `factor`) while batches stay sub-millisecond: scheduler
    // preemptions then show up as enormous single-sample outliers, which
    // the balancer's ingestion gate discards, and slow host-level
    // core-speed drift rarely overlaps the short convergence window.
    static constexpr std::uint32_t kDefaultUnits = 256;

    bool enabled() const { return factor > 1.0 || work_units > 0; }
    std::uint32_t fast_units() const {
        if (work_units > 0) {
            return work_units;
        }
        return factor > 1.0 ? kDefaultUnits : 0;
    }
    std::uint32_t slow_units() const {
        return static_cast<std::uint32_t>(std::nearbyint(factor * fast_units()));
    }
    void validate() const {
        if (!(factor >= 1.0)) {
            throw std::invalid_argument("SlowdownModel: factor must be >= 1");
        }
    }
};

// Serial xorshift chain; cannot be vectorized away and costs a few ns per
// round. The return value must be consumed by the caller.
inline std::uint64_t spin_work(std::uint64_t seed, std::uint32_t rounds) {
    std::uint64_t z = seed | 1;
    for (std::uint32_t i = 0; i < rounds; ++i) {
        z ^= z << 13;
        z ^= z >> 7;
        z ^= z << 17;
    }
    return z;
}

struct HeteroOptions {
    std::size_t batch = 1024;
    // 0 = one worker pair per row pair. Fewer pairs than row pairs is
    // allowed; pair k then also serves row pairs k+P, k+2P, ...
    std::size_t worker_pairs = 0;
    // Explicit (fast row, slow row) assignments. Empty = adjacent rows
    // (2k, 2k+1), which requires an even depth.
    std::vector<std::pair<std::size_t, std::size_t>> row_pairs;
    SlowdownModel slowdown{};
    BalancerOptions balancer{};
    // Best-effort core pinning hint per worker index; ignored where
    // unsupported.
    std::vector<int> affinity;
    // Walk the workers through the affinity list between batches. With a
    // pair pinned to two cores this parks each worker on each core half
    // the time, so slow drift of one core's clock speed cancels out of
    // the balancer's window instead of reading as a worker speed change.
    bool rotate_affinity = false;
    const BuildProbe* probe = nullptr;
};

struct F2SSample {
    std::uint64_t batch; // 1-based batch index
    double ratio;        // fastBatchSize / slowBatchSize after that batch
};

struct HeteroReport {
    std::vector<F2SSample> hash_trace;
    std::vector<F2SSample> update_trace;
    std::uint64_t hash_frozen_at = 0;   // batch index; 0 = never froze
    std::uint64_t update_frozen_at = 0;
    std::size_t hash_fast_share = 0;
    std::size_t hash_slow_share = 0;
    std::size_t update_fast_share = 0;
    std::size_t update_slow_share = 0;
    PhaseTimes times;
};

namespace detail {

// Time this thread actually spent on a core. Stage measurements feed the
// balancer, and preemption by other processes should not look like
// slowness of the worker itself; the thread CPU clock gives exactly that.
// Some sandboxed kernels expose the clock but never advance it, so probe
// it once and fall back to wall time when it is dead.
inline double raw_thread_cpu_seconds() {
#if defined(CLOCK_THREAD_CPUTIME_ID)
    timespec ts;
    if (clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts) == 0) {
        return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
    }
#endif
    return -1.0;
}

inline bool thread_cpu_clock_usable() {
    static const bool usable = [] {
        const double before = raw_thread_cpu_seconds();
        if (before < 0.0) {
            return false;
        }
        volatile std::uint64_t sink = spin_work(1, 200'000); // ~a quarter millisecond
        (void)sink;
        return raw_thread_cpu_seconds() > before;
    }();
    return usable;
}

inline double thread_seconds() {
    if (thread_cpu_clock_usable()) {
        return raw_thread_cpu_seconds();
    }
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline void apply_affinity_hint(int cpu) {
#ifdef __linux__
    if (cpu < 0) {
        return;
    }
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(static_cast<unsigned>(cpu), &set);
    pthread_setaffinity_np(pthread_self(), sizeof(set), &set); // best effort
#else
    (void)cpu;
#endif
}

// Proportional share of `length` items for the fast half when a batch (or
// pair slice) is shorter than the balancer budget.
inline std::size_t scaled_fast_share(std::size_t fast, std::size_t budget, std::size_t length) {
    if (length >= budget) {
        return fast;
    }
    const auto scaled = static_cast<std::size_t>(std::nearbyint(
        static_cast<double>(fast) * static_cast<double>(length) / static_cast<double>(budget)));
    return std::min(scaled, length);
}

} // namespace detail

// Buffered two-phase build with paired fast/slow workers and dynamic
// batch-share balancing. Counters come out bit-identical to
// build_sequential; only the timing behaviour depends on the slowdown
// model and the balance trajectory.
template <std::unsigned_integral Counter>
HeteroReport build_buffered_hetero(std::span<const std::uint32_t> stream,
                                   CountMinSketch<Counter>& sketch,
                                   const HeteroOptions& options = {}) {
    const std::size_t depth = sketch.depth();
    const std::uint32_t width = static_cast<std::uint32_t>(sketch.width());
    const std::size_t total = stream.size();
    options.slowdown.validate();

    std::vector<std::pair<std::size_t, std::size_t>> row_pairs = options.row_pairs;
    if (row_pairs.empty()) {
        if (depth % 2 != 0) {
            throw std::invalid_argument(
                "build_buffered_hetero: odd depth requires explicit row pairs");
        }
        for (std::size_t r = 0; r < depth; r += 2) {
            row_pairs.push_back({r, r + 1});
        }
    }
    std::vector<char> covered(depth, 0);
    for (const auto& [fast_row, slow_row] : row_pairs) {
        if (fast_row >= depth || slow_row >= depth || covered[fast_row] || covered[slow_row] ||
            fast_row == slow_row) {
            throw std::invalid_argument("build_buffered_hetero: row pairs must cover every row exactly once");
        }
        covered[fast_row] = covered[slow_row] = 1;
    }
    for (char c : covered) {
        if (!c) {
            throw std::invalid_argument("build_buffered_hetero: row pairs must cover every row exactly once");
        }
    }

    const std::size_t pair_count = options.worker_pairs ? options.worker_pairs : row_pairs.size();
    if (pair_count < 1 || pair_count > row_pairs.size()) {
        throw std::invalid_argument("build_buffered_hetero: worker pair count out of range");
    }
    const std::size_t batch = options.batch;
    if (batch < 2 * pair_count) {
        throw std::invalid_argument("build_buffered_hetero: batch too small for the pair count");
    }

    HeteroReport report;
    if (total == 0) {
        return report;
    }

    const unsigned worker_count = static_cast<unsigned>(2 * pair_count);
    const std::size_t hash_budget = chunk_range(batch, static_cast<unsigned>(pair_count), 0).second;
    BatchBalancer hash_balancer(hash_budget, options.balancer);
    BatchBalancer update_balancer(batch, options.balancer);

    HashBuffer buffer(batch, depth);
    std::vector<double> hash_seconds(worker_count, 0.0);
    std::vector<double> update_seconds(worker_count, 0.0);
    std::atomic<bool> saturated{false};
    std::atomic<std::uint64_t> spin_sink{0};

    const std::uint32_t fast_units = options.slowdown.enabled() ? options.slowdown.fast_units() : 0;
    const std::uint32_t slow_units = options.slowdown.enabled() ? options.slowdown.slow_units() : 0;

    // Per-batch bookkeeping runs inside barrier completions: every worker
    // is blocked there, so reading their timings and moving the balancers
    // is race-free, and new shares are visible as soon as they resume.
    std::uint64_t batch_no = 0;
    std::size_t rendezvous_step = 0; // 0: hashing done, 1: stage 1 done, 2: batch done
    auto mark = std::chrono::steady_clock::now();

    auto mean_of = [](const std::vector<double>& v, bool fast_half) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = fast_half ? 0 : 1; i < v.size(); i += 2) {
            sum += v[i];
            ++n;
        }
        return sum / static_cast<double>(n);
    };

    std::barrier rendezvous(static_cast<std::ptrdiff_t>(worker_count), [&]() noexcept {
        const auto now = std::chrono::steady_clock::now();
        const double dt = std::chrono::duration<double>(now - mark).count();
        mark = now;
        const std::size_t len = std::min(batch, total - static_cast<std::size_t>(batch_no) * batch);
        const bool full_batch = len == batch;
        switch (rendezvous_step) {
            case 0: {
                report.times.hash_seconds += dt;
                const double t_fast = mean_of(hash_seconds, true);
                const double t_slow = mean_of(hash_seconds, false);
                if (full_batch && !hash_balancer.frozen() && t_fast > 0.0 && t_slow > 0.0) {
                    hash_balancer.update(t_fast, t_slow);
                    if (hash_balancer.frozen() && report.hash_frozen_at == 0) {
                        report.hash_frozen_at = batch_no + 1;
                    }
                }
                rendezvous_step = 1;
                break;
            }
            case 1:
                report.times.update_seconds += dt;
                rendezvous_step = 2;
                break;
            case 2: {
                report.times.update_seconds += dt;
                const double t_fast = mean_of(update_seconds, true);
                const double t_slow = mean_of(update_seconds, false);
                if (full_batch && !update_balancer.frozen() && t_fast > 0.0 && t_slow > 0.0) {
                    update_balancer.update(t_fast, t_slow);
                    if (update_balancer.frozen() && report.update_frozen_at == 0) {
                        report.update_frozen_at = batch_no + 1;
                    }
                }
                ++batch_no;
                report.hash_trace.push_back({batch_no, hash_balancer.f2s()});
                report.update_trace.push_back({batch_no, update_balancer.f2s()});
                rendezvous_step = 0;
                break;
            }
        }
    });

    const BuildProbe* probe = options.probe;

    auto work = [&](unsigned id) {
        if (id < options.affinity.size()) {
            detail::apply_affinity_hint(options.affinity[id]);
        }
        const bool is_fast = (id % 2) == 0;
        const std::size_t pair = id / 2;
        const std::uint32_t units = is_fast ? fast_units : slow_units;
        std::uint32_t hashes[SketchParams::kMaxDepth];
        bool local_saturated = false;
        std::uint64_t sink = 0;

        auto bump_cell = [&](std::size_t row, std::size_t item_index) {
            Counter& cell = sketch.row(row)[buffer.item_columns(item_index)[row]];
            if (cell == std::numeric_limits<Counter>::max()) {
                local_saturated = true;
            } else {
                ++cell;
            }
        };

        std::uint64_t batch_index = 0;
        for (std::size_t offset = 0; offset < total; offset += batch, ++batch_index) {
            const std::size_t len = std::min(batch, total - offset);
            if (options.rotate_affinity && !options.affinity.empty()) {
                detail::apply_affinity_hint(
                    options.affinity[(id + batch_index) % options.affinity.size()]);
            }

            // Phase 1: each pair hashes a contiguous slice of the batch,
            // split between its members per the hashing balancer.
            const auto [slice_first, slice_count] =
                chunk_range(len, static_cast<unsigned>(pair_count), static_cast<unsigned>(pair));
            const std::size_t slice_fast = detail::scaled_fast_share(
                hash_balancer.fast_share(), hash_balancer.budget(), slice_count);
            const std::size_t my_first = is_fast ? slice_first : slice_first + slice_fast;
            const std::size_t my_last = is_fast ? slice_first + slice_fast : slice_first + slice_count;

            if (probe && probe->phase_begin) {
                probe->phase_begin(id, batch_index, BuildPhase::hash);
            }
            const double t0 = detail::thread_seconds();
            for (std::size_t j = my_first; j < my_last; ++j) {
                sketch.table().hash(stream[offset + j], hashes);
                std::uint32_t* columns = buffer.item_columns(j);
                for (std::size_t r = 0; r < depth; ++r) {
                    columns[r] = hashes[r] % width;
                }
                if (units) {
                    sink += spin_work(stream[offset + j], units);
                }
            }
            hash_seconds[id] = detail::thread_seconds() - t0;
            if (probe && probe->phase_end) {
                probe->phase_end(id, batch_index, BuildPhase::hash);
            }

            rendezvous.arrive_and_wait();

            // Phase 2, two stages per the pair schedule; stage ranges are
            // scaled when the final batch is short.
            const std::size_t update_fast = detail::scaled_fast_share(
                update_balancer.fast_share(), update_balancer.budget(), len);
            const std::size_t update_slow = len - update_fast;

            auto run_stage = [&](BuildPhase phase, std::size_t stage_first, std::size_t stage_last,
                                 bool even_rows) {
                if (probe && probe->phase_begin) {
                    probe->phase_begin(id, batch_index, phase);
                }
                const double begin = detail::thread_seconds();
                for (std::size_t k = pair; k < row_pairs.size(); k += pair_count) {
                    const std::size_t row = even_rows ? row_pairs[k].first : row_pairs[k].second;
                    if (probe && probe->row_pass_begin) {
                        probe->row_pass_begin(id, batch_index, row, stage_first,
                                              stage_last - stage_first);
                    }
                    for (std::size_t j = stage_first; j < stage_last; ++j) {
                        bump_cell(row, j);
                        if (units) {
                            sink += spin_work(j + 1, units);
                        }
                    }
                    if (probe && probe->row_pass_end) {
                        probe->row_pass_end(id, batch_index, row, stage_first,
                                            stage_last - stage_first);
                    }
                }
                if (probe && probe->phase_end) {
                    probe->phase_end(id, batch_index, phase);
                }
                return detail::thread_seconds() - begin;
            };

            // Stage 1: fast worker on the even row of each owned pair.
            double stage_time = is_fast
                                    ? run_stage(BuildPhase::update, 0, update_fast, true)
                                    : run_stage(BuildPhase::update, 0, update_slow, false);

            rendezvous.arrive_and_wait();

            // Stage 2: rows swapped, resuming from the mate's stop point.
            stage_time += is_fast
                              ? run_stage(BuildPhase::update_stage2, update_slow, len, false)
                              : run_stage(BuildPhase::update_stage2, update_fast, len, true);
            update_seconds[id] = stage_time;

            rendezvous.arrive_and_wait();
        }

        spin_sink.fetch_add(sink, std::memory_order_relaxed);
        if (local_saturated) {
            saturated.store(true, std::memory_order_relaxed);
        }
    };

    std::vector<std::jthread> workers;
    workers.reserve(worker_count - 1);
    for (unsigned id = 1; id < worker_count; ++id) {
        workers.emplace_back(work, id);
    }
    work(0);
    workers.clear();

    sketch.note_inserted(total);
    if (saturated.load()) {
        sketch.note_saturated();
    }
    report.hash_fast_share = hash_balancer.fast_share();
    report.hash_slow_share = hash_balancer.slow_share();
    report.update_fast_share = update_balancer.fast_share();
    report.update_slow_share = update_balancer.slow_share();
    return report;
}

} // namespace cms
