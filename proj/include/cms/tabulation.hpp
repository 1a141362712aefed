#pragma once
// Tabulation hashing for 32-bit keys: four random 256-entry lookup rows,
// one per key byte, XOR-combined. MergedTabulationTable interleaves the
// columns of d such tables so the d lookups for one (byte position, byte
// value) pair sit in adjacent memory and a multi-hash costs at most one
// cache miss per key byte.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cms/prng.hpp"

namespace cms {

// Reduces a 32-bit hash value to a column index in [0, w).
inline std::uint32_t to_column(std::uint32_t hash, std::uint32_t width) {
    if (width == 0) {
        throw std::invalid_argument("to_column: width must be >= 1");
    }
    return hash % width;
}

class TabulationTable {
  public:
    static constexpr std::size_t kPositions = 4;   // byte positions of a 32-bit key
    static constexpr std::size_t kByteRange = 256;

    // Fills all 4x256 entries from SplitMix64(seed), positions outer,
    // byte values inner. Reconstruction from the same seed is identical.
    explicit TabulationTable(std::uint64_t seed) : seed_(seed) {
        SplitMix64 gen(seed);
        entries_.resize(kPositions * kByteRange);
        for (auto& e : entries_) {
            e = gen.next_u32();
        }
    }

    // Test/advanced constructor: inject explicit entries (position-major).
    static TabulationTable from_entries(std::span<const std::uint32_t> entries) {
        if (entries.size() != kPositions * kByteRange) {
            throw std::invalid_argument("TabulationTable: expected 4*256 entries");
        }
        TabulationTable t;
        t.entries_.assign(entries.begin(), entries.end());
        return t;
    }

    // Byte c is the c-th least significant byte of the key.
    std::uint32_t hash(std::uint32_t x) const {
        const std::uint32_t* e = entries_.data();
        return e[x & 0xFF] ^ e[kByteRange + ((x >> 8) & 0xFF)] ^
               e[2 * kByteRange + ((x >> 16) & 0xFF)] ^
               e[3 * kByteRange + (x >> 24)];
    }

    std::uint64_t seed() const { return seed_; }

    std::uint32_t entry(std::size_t position, std::size_t value) const {
        return entries_[position * kByteRange + value];
    }

  private:
    TabulationTable() = default;

    std::uint64_t seed_ = 0;
    std::vector<std::uint32_t> entries_;
};

// d tabulation tables stored as one: entry (position c, byte v, function j)
// lives at row c, column v*d + j, so the d values for a (c, v) pair are
// contiguous. Immutable after construction; concurrent reads are safe.
class MergedTabulationTable {
  public:
    explicit MergedTabulationTable(std::span<const std::uint64_t> seeds)
        : depth_(seeds.size()), seeds_(seeds.begin(), seeds.end()) {
        if (seeds.empty()) {
            throw std::invalid_argument("MergedTabulationTable: need at least one seed");
        }
        entries_.resize(TabulationTable::kPositions * TabulationTable::kByteRange * depth_);
        for (std::size_t j = 0; j < depth_; ++j) {
            TabulationTable t(seeds_[j]);
            for (std::size_t c = 0; c < TabulationTable::kPositions; ++c) {
                for (std::size_t v = 0; v < TabulationTable::kByteRange; ++v) {
                    entries_[slot(c, v, j)] = t.entry(c, v);
                }
            }
        }
    }

    // Test constructor: inject the interleaved storage directly.
    static MergedTabulationTable from_entries(std::size_t depth,
                                              std::span<const std::uint32_t> entries) {
        if (depth == 0) {
            throw std::invalid_argument("MergedTabulationTable: depth must be >= 1");
        }
        if (entries.size() != TabulationTable::kPositions * TabulationTable::kByteRange * depth) {
            throw std::invalid_argument("MergedTabulationTable: entry count mismatch");
        }
        MergedTabulationTable m;
        m.depth_ = depth;
        m.seeds_.assign(depth, 0);
        m.entries_.assign(entries.begin(), entries.end());
        return m;
    }

    std::size_t depth() const { return depth_; }
    std::span<const std::uint64_t> seeds() const { return seeds_; }

    std::uint32_t entry(std::size_t position, std::size_t value, std::size_t function) const {
        return entries_[slot(position, value, function)];
    }

    // out[j] = hash of x under table j. Per byte position this reads one
    // contiguous run of depth() entries.
    void hash(std::uint32_t x, std::uint32_t* out) const {
        const std::size_t stride = TabulationTable::kByteRange * depth_;
        const std::uint32_t* base0 = entries_.data() + (x & 0xFF) * depth_;
        const std::uint32_t* base1 = entries_.data() + stride + ((x >> 8) & 0xFF) * depth_;
        const std::uint32_t* base2 = entries_.data() + 2 * stride + ((x >> 16) & 0xFF) * depth_;
        const std::uint32_t* base3 = entries_.data() + 3 * stride + (x >> 24) * depth_;
        for (std::size_t j = 0; j < depth_; ++j) {
            out[j] = base0[j] ^ base1[j] ^ base2[j] ^ base3[j];
        }
    }

    std::vector<std::uint32_t> hash(std::uint32_t x) const {
        std::vector<std::uint32_t> out(depth_);
        hash(x, out.data());
        return out;
    }

  private:
    MergedTabulationTable() = default;

    std::size_t slot(std::size_t position, std::size_t value, std::size_t function) const {
        return position * TabulationTable::kByteRange * depth_ + value * depth_ + function;
    }

    std::size_t depth_ = 0;
    std::vector<std::uint64_t> seeds_;
    std::vector<std::uint32_t> entries_;
};

} // namespace cms
