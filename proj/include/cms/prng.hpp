#pragma once
// Seeded, splittable 64-bit generator used everywhere determinism matters:
// table fills, seed derivation, stream synthesis. The algorithm identifier
// is written into sketch files so they stay portable across builds.

#include <cstdint>
#include <string_view>

namespace cms {

inline constexpr std::string_view kPrngId = "splitmix64";

// Sebastiano Vigna's splitmix64. State advances by the golden gamma; every
// output is a bijective mix of the state, so distinct seeds give distinct
// streams and skipping ahead is just repeated next().
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next()); }

    // Uniform double in [0, 1), 53 significant bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound). Modulo reduction; the bias of
    // bound / 2^64 is far below anything the workloads can resolve.
    std::uint64_t next_below(std::uint64_t bound) { return next() % bound; }

  private:
    std::uint64_t state_;
};

} // namespace cms
