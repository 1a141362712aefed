#pragma once
// Count-Min Sketch: a d x w counter grid addressed by d tabulation hashes.
// Estimates are one-sided; query(x) >= true frequency as long as counters
// never wrap, which saturation guarantees.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <new>
#include <span>
#include <stdexcept>
#include <vector>

#include "cms/tabulation.hpp"

// Row storage is padded to this many bytes so no two rows share a cache
// line when different workers own them.
#ifndef CMS_COUNTER_ROW_ALIGN
#define CMS_COUNTER_ROW_ALIGN 64
#endif

namespace cms {

enum class WidthMode {
    ceil_e_over_eps,        // w = ceil(e / epsilon)
    prime_after_2_over_eps, // w = smallest prime > 2 / epsilon
};

enum class DepthMode {
    ceil_ln_inv_delta, // d = ceil(ln(1 / delta))
    explicit_rows,
};

// Number of bits needed to represent counts up to n, i.e. ceil(log2 n).
inline std::uint64_t ceil_log2(std::uint64_t n) {
    if (n <= 1) {
        return 0;
    }
    return static_cast<std::uint64_t>(std::bit_width(n - 1));
}

inline bool is_prime(std::uint64_t n) {
    if (n < 2) {
        return false;
    }
    if (n % 2 == 0) {
        return n == 2;
    }
    for (std::uint64_t f = 3; f * f <= n; f += 2) {
        if (n % f == 0) {
            return false;
        }
    }
    return true;
}

inline std::uint64_t next_prime_above(std::uint64_t n) {
    std::uint64_t candidate = n + 1;
    while (!is_prime(candidate)) {
        ++candidate;
    }
    return candidate;
}

struct SketchParams {
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t depth = 0;
    std::size_t width = 0;
    WidthMode width_mode = WidthMode::prime_after_2_over_eps;
    DepthMode depth_mode = DepthMode::ceil_ln_inv_delta;

    // Hash columns are buffered in 32 bits and rows fan out of a fixed-size
    // scratch in the hot loops.
    static constexpr std::size_t kMaxDepth = 64;
    static constexpr std::size_t kMaxWidth = std::uint32_t(-1);

    // Derives dimensions from the error contract. explicit_depth is only
    // read when depth_mode == explicit_rows.
    static SketchParams from_error_bounds(double epsilon, double delta,
                                          WidthMode width_mode = WidthMode::prime_after_2_over_eps,
                                          DepthMode depth_mode = DepthMode::ceil_ln_inv_delta,
                                          std::size_t explicit_depth = 0) {
        if (!(epsilon > 0.0 && epsilon < 1.0)) {
            throw std::invalid_argument("SketchParams: epsilon must be in (0, 1)");
        }
        if (!(delta > 0.0 && delta < 1.0)) {
            throw std::invalid_argument("SketchParams: delta must be in (0, 1)");
        }
        SketchParams p;
        p.epsilon = epsilon;
        p.delta = delta;
        p.width_mode = width_mode;
        p.depth_mode = depth_mode;
        switch (width_mode) {
            case WidthMode::ceil_e_over_eps:
                p.width = static_cast<std::size_t>(std::ceil(std::exp(1.0L) / epsilon));
                break;
            case WidthMode::prime_after_2_over_eps:
                p.width = static_cast<std::size_t>(
                    next_prime_above(static_cast<std::uint64_t>(2.0L / epsilon)));
                break;
        }
        if (depth_mode == DepthMode::explicit_rows) {
            p.depth = explicit_depth;
        } else {
            p.depth = static_cast<std::size_t>(std::ceil(std::log(1.0 / delta)));
        }
        p.validate();
        return p;
    }

    static SketchParams from_dimensions(std::size_t depth, std::size_t width) {
        SketchParams p;
        p.depth = depth;
        p.width = width;
        p.depth_mode = DepthMode::explicit_rows;
        p.validate();
        return p;
    }

    void validate() const {
        if (depth < 1 || depth > kMaxDepth) {
            throw std::invalid_argument("SketchParams: depth out of range [1, 64]");
        }
        if (width < 1 || width > kMaxWidth) {
            throw std::invalid_argument("SketchParams: width out of range");
        }
    }

    bool same_dimensions(const SketchParams& other) const {
        return depth == other.depth && width == other.width;
    }
};

enum class MemoryModel { multi_table, single_table_buffered };

// Footprint in bits of a construction run: tau private sketches for the
// multi-table scheme, or one sketch plus one batch buffer of column ids
// for the buffered single-table scheme.
inline std::uint64_t memory_footprint_bits(std::size_t depth, std::size_t width, std::size_t tau,
                                           std::size_t batch, std::uint64_t stream_length,
                                           MemoryModel model) {
    if (depth < 1 || width < 1 || tau < 1 || batch < 1 || stream_length < 1) {
        throw std::invalid_argument("memory_footprint_bits: all arguments must be >= 1");
    }
    const std::uint64_t counter_bits = ceil_log2(stream_length);
    const std::uint64_t column_bits = ceil_log2(width);
    switch (model) {
        case MemoryModel::multi_table:
            return std::uint64_t(depth) * width * tau * counter_bits;
        case MemoryModel::single_table_buffered:
            return std::uint64_t(depth) * (std::uint64_t(width) * counter_bits + std::uint64_t(batch) * column_bits);
    }
    throw std::invalid_argument("memory_footprint_bits: unknown model");
}

namespace detail {

// Minimal aligned allocator so counter rows start on cache-line boundaries.
template <typename T, std::size_t Align>
struct AlignedAllocator {
    using value_type = T;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(Align));
    }

    template <typename U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    bool operator==(const AlignedAllocator&) const { return true; }
};

} // namespace detail

template <std::unsigned_integral Counter = std::uint32_t>
class CountMinSketch {
  public:
    using counter_type = Counter;

    // Derives the d row seeds from master_seed via SplitMix64.
    CountMinSketch(const SketchParams& params, std::uint64_t master_seed)
        : CountMinSketch(params, derive_seeds(params, master_seed)) {}

    CountMinSketch(const SketchParams& params, std::vector<std::uint64_t> seeds)
        : params_(params), seeds_(std::move(seeds)),
          table_(std::span<const std::uint64_t>(seeds_)) {
        params_.validate();
        if (seeds_.size() != params_.depth) {
            throw std::invalid_argument("CountMinSketch: seed count != depth");
        }
        allocate();
    }

    // Injected-table constructor, used by tests to force collisions.
    CountMinSketch(const SketchParams& params, MergedTabulationTable table)
        : params_(params), table_(std::move(table)) {
        params_.validate();
        if (table_.depth() != params_.depth) {
            throw std::invalid_argument("CountMinSketch: table depth != sketch depth");
        }
        seeds_.assign(table_.seeds().begin(), table_.seeds().end());
        allocate();
    }

    std::size_t depth() const { return params_.depth; }
    std::size_t width() const { return params_.width; }
    const SketchParams& params() const { return params_; }
    std::span<const std::uint64_t> seeds() const { return seeds_; }
    const MergedTabulationTable& table() const { return table_; }
    std::uint64_t items_processed() const { return items_; }
    bool saturated() const { return saturated_; }

    void insert(std::uint32_t item) {
        std::uint32_t hashes[SketchParams::kMaxDepth];
        table_.hash(item, hashes);
        const std::uint32_t w = static_cast<std::uint32_t>(params_.width);
        for (std::size_t r = 0; r < params_.depth; ++r) {
            bump(row(r)[hashes[r] % w]);
        }
        ++items_;
    }

    Counter query(std::uint32_t item) const {
        std::uint32_t hashes[SketchParams::kMaxDepth];
        table_.hash(item, hashes);
        const std::uint32_t w = static_cast<std::uint32_t>(params_.width);
        Counter best = std::numeric_limits<Counter>::max();
        for (std::size_t r = 0; r < params_.depth; ++r) {
            const Counter v = row(r)[hashes[r] % w];
            if (v < best) {
                best = v;
            }
        }
        return best;
    }

    // Elementwise counter sum. Requires the same dimensions and hash seeds.
    void merge_from(const CountMinSketch& other) {
        if (!params_.same_dimensions(other.params_)) {
            throw std::invalid_argument("merge: sketch dimensions differ");
        }
        if (seeds_ != other.seeds_) {
            throw std::invalid_argument("merge: hash seeds differ");
        }
        for (std::size_t r = 0; r < params_.depth; ++r) {
            Counter* dst = row(r);
            const Counter* src = other.row(r);
            for (std::size_t c = 0; c < params_.width; ++c) {
                saturated_ = add_saturating(dst[c], src[c]) || saturated_;
            }
        }
        items_ += other.items_;
        saturated_ = saturated_ || other.saturated_;
    }

    // Builder access: raw row storage and post-build bookkeeping. Rows are
    // stride()-spaced; only the first width() cells of a row are counters.
    Counter* row(std::size_t r) { return counters_.data() + r * stride_; }
    const Counter* row(std::size_t r) const { return counters_.data() + r * stride_; }
    std::span<Counter> row_counters(std::size_t r) { return {row(r), params_.width}; }
    std::span<const Counter> row_counters(std::size_t r) const { return {row(r), params_.width}; }
    std::size_t stride() const { return stride_; }

    void bump(Counter& cell) {
        if (cell == std::numeric_limits<Counter>::max()) {
            saturated_ = true;
        } else {
            ++cell;
        }
    }

    void note_inserted(std::uint64_t n) { items_ += n; }
    void note_saturated() { saturated_ = true; }

    // Restores serialized state; counters arrive row-major without padding.
    void restore(std::uint64_t items, bool saturated, std::span<const Counter> flat_counters) {
        if (flat_counters.size() != params_.depth * params_.width) {
            throw std::invalid_argument("restore: counter count mismatch");
        }
        for (std::size_t r = 0; r < params_.depth; ++r) {
            const Counter* src = flat_counters.data() + r * params_.width;
            std::copy(src, src + params_.width, row(r));
        }
        items_ = items;
        saturated_ = saturated;
    }

    bool operator==(const CountMinSketch& other) const {
        if (!params_.same_dimensions(other.params_) || seeds_ != other.seeds_ ||
            items_ != other.items_ || saturated_ != other.saturated_) {
            return false;
        }
        for (std::size_t r = 0; r < params_.depth; ++r) {
            const Counter* a = row(r);
            const Counter* b = other.row(r);
            for (std::size_t c = 0; c < params_.width; ++c) {
                if (a[c] != b[c]) {
                    return false;
                }
            }
        }
        return true;
    }

  private:
    static std::vector<std::uint64_t> derive_seeds(const SketchParams& params,
                                                   std::uint64_t master_seed) {
        params.validate();
        SplitMix64 gen(master_seed);
        std::vector<std::uint64_t> seeds(params.depth);
        for (auto& s : seeds) {
            s = gen.next();
        }
        return seeds;
    }

    void allocate() {
        constexpr std::size_t align = CMS_COUNTER_ROW_ALIGN;
        const std::size_t row_bytes = params_.width * sizeof(Counter);
        const std::size_t padded = (row_bytes + align - 1) / align * align;
        stride_ = padded / sizeof(Counter);
        counters_.assign(params_.depth * stride_, 0);
    }

    static bool add_saturating(Counter& dst, Counter src) {
        const Counter room = std::numeric_limits<Counter>::max() - dst;
        if (src > room) {
            dst = std::numeric_limits<Counter>::max();
            return true;
        }
        dst += src;
        return false;
    }

    SketchParams params_;
    std::vector<std::uint64_t> seeds_;
    MergedTabulationTable table_;
    std::vector<Counter, detail::AlignedAllocator<Counter, CMS_COUNTER_ROW_ALIGN>> counters_;
    std::size_t stride_ = 0;
    std::uint64_t items_ = 0;
    bool saturated_ = false;
};

template <std::unsigned_integral Counter>
CountMinSketch<Counter> merge(const CountMinSketch<Counter>& a, const CountMinSketch<Counter>& b) {
    CountMinSketch<Counter> out = a;
    out.merge_from(b);
    return out;
}

} // namespace cms
