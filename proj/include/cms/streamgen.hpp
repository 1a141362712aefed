#pragma once
// Workload synthesis (uniform and Zipfian 32-bit item streams) and the
// exact-count oracle the accuracy evaluation compares against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cms/prng.hpp"
#include "cms/sketch.hpp"

namespace cms {

enum class Distribution { uniform, zipf };

struct StreamSpec {
    Distribution distribution = Distribution::uniform;
    double alpha = 1.0;          // zipf shape; ignored for uniform
    std::uint64_t universe = 1;  // n distinct candidate items
    std::uint64_t count = 0;     // N items to emit
    std::uint64_t seed = 0;

    void validate() const {
        if (universe < 1) {
            throw std::invalid_argument("StreamSpec: universe must be >= 1");
        }
        if (universe > (std::uint64_t(1) << 32)) {
            throw std::invalid_argument("StreamSpec: universe exceeds 32-bit item space");
        }
        if (distribution == Distribution::zipf && !(alpha > 0.0)) {
            throw std::invalid_argument("StreamSpec: zipf alpha must be > 0");
        }
    }
};

// Inverse-transform Zipf sampler: rank k in 1..n has probability
// proportional to 1/k^alpha. The cumulative table is normalized by a sum
// accumulated in the same order, so the final entry is exactly 1.
class ZipfSampler {
  public:
    ZipfSampler(std::uint64_t n, double alpha) : alpha_(alpha) {
        if (n < 1) {
            throw std::invalid_argument("ZipfSampler: n must be >= 1");
        }
        if (!(alpha > 0.0)) {
            throw std::invalid_argument("ZipfSampler: alpha must be > 0");
        }
        cdf_.resize(n);
        double total = 0.0;
        for (std::uint64_t k = 1; k <= n; ++k) {
            total += std::pow(static_cast<double>(k), -alpha);
        }
        double running = 0.0;
        for (std::uint64_t k = 1; k <= n; ++k) {
            running += std::pow(static_cast<double>(k), -alpha);
            cdf_[k - 1] = running / total;
        }
        normalizer_ = total;
    }

    // 0-based rank for a uniform draw u in [0, 1).
    std::size_t sample_rank(double u) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) {
            --it;
        }
        return static_cast<std::size_t>(it - cdf_.begin());
    }

    double rank_probability(std::uint64_t rank_one_based) const {
        return std::pow(static_cast<double>(rank_one_based), -alpha_) / normalizer_;
    }

    std::span<const double> cdf() const { return cdf_; }

  private:
    double alpha_;
    double normalizer_;
    std::vector<double> cdf_;
};

// Deterministic stream synthesis: same spec, byte-identical stream. For
// zipf the hot ranks are scattered over the key space through a seeded
// permutation of the universe.
inline std::vector<std::uint32_t> generate_stream(const StreamSpec& spec) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    std::vector<std::uint32_t> stream;
    stream.reserve(spec.count);

    if (spec.distribution == Distribution::uniform) {
        for (std::uint64_t i = 0; i < spec.count; ++i) {
            stream.push_back(static_cast<std::uint32_t>(rng.next_below(spec.universe)));
        }
        return stream;
    }

    ZipfSampler sampler(spec.universe, spec.alpha);
    std::vector<std::uint32_t> rank_to_item(spec.universe);
    std::iota(rank_to_item.begin(), rank_to_item.end(), 0u);
    // Fisher-Yates with the stream's own generator; std::shuffle is
    // implementation-defined and would break cross-build determinism.
    for (std::uint64_t i = spec.universe - 1; i > 0; --i) {
        const std::uint64_t j = rng.next_below(i + 1);
        std::swap(rank_to_item[i], rank_to_item[j]);
    }
    for (std::uint64_t i = 0; i < spec.count; ++i) {
        stream.push_back(rank_to_item[sampler.sample_rank(rng.next_unit())]);
    }
    return stream;
}

// Ground-truth frequencies of a stream. Read-only after construction.
class ExactOracle {
  public:
    ExactOracle() = default;

    explicit ExactOracle(std::span<const std::uint32_t> stream) {
        counts_.reserve(stream.size() / 4 + 1);
        for (std::uint32_t item : stream) {
            ++counts_[item];
        }
        total_ = stream.size();
    }

    std::uint64_t count(std::uint32_t item) const {
        auto it = counts_.find(item);
        return it == counts_.end() ? 0 : it->second;
    }

    std::uint64_t total() const { return total_; }
    std::size_t distinct() const { return counts_.size(); }
    const std::unordered_map<std::uint32_t, std::uint64_t>& counts() const { return counts_; }

  private:
    std::unordered_map<std::uint32_t, std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

// Per-distinct-item deviation of sketch estimates from exact counts.
// Deviations are signed: race-free builds never go below zero, the relaxed
// naive build may.
struct AccuracyReport {
    std::uint64_t items_processed = 0;
    std::size_t distinct = 0;
    double epsilon = 0.0;
    double threshold = 0.0; // epsilon * N
    std::int64_t max_overestimate = 0;
    std::int64_t min_deviation = 0;
    double mean_overestimate = 0.0;
    std::uint64_t over_threshold = 0; // items with deviation >= threshold
    double over_threshold_fraction = 0.0;
};

template <std::unsigned_integral Counter>
AccuracyReport eval_accuracy(const CountMinSketch<Counter>& sketch, const ExactOracle& oracle,
                             double epsilon) {
    if (sketch.items_processed() != oracle.total()) {
        throw std::invalid_argument("eval_accuracy: sketch and oracle cover different streams");
    }
    AccuracyReport report;
    report.items_processed = oracle.total();
    report.distinct = oracle.distinct();
    report.epsilon = epsilon;
    report.threshold = epsilon * static_cast<double>(oracle.total());
    if (oracle.distinct() == 0) {
        return report;
    }
    report.min_deviation = std::numeric_limits<std::int64_t>::max();
    double sum = 0.0;
    for (const auto& [item, exact] : oracle.counts()) {
        const std::int64_t deviation =
            static_cast<std::int64_t>(sketch.query(item)) - static_cast<std::int64_t>(exact);
        report.max_overestimate = std::max(report.max_overestimate, deviation);
        report.min_deviation = std::min(report.min_deviation, deviation);
        sum += static_cast<double>(deviation);
        if (static_cast<double>(deviation) >= report.threshold) {
            ++report.over_threshold;
        }
    }
    report.mean_overestimate = sum / static_cast<double>(oracle.distinct());
    report.over_threshold_fraction =
        static_cast<double>(report.over_threshold) / static_cast<double>(oracle.distinct());
    return report;
}

} // namespace cms
