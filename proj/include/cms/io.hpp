#pragma once
// Binary file formats, little-endian regardless of host.
//
// Stream file:  "CMSTRM01" | u64 item count | count x u32 items
// Sketch file:  "CMSKCH01" | u32 version | u32 counter bits | u32 depth |
//               u32 width | u32 flags (bit 0: saturated) | u32 prng id len |
//               prng id bytes | f64 epsilon | f64 delta | u64 items
//               processed | depth x u64 seeds | row-major counters (width
//               per row, no padding)
//
// Loading widens 32-bit counter files into 64-bit sketches; narrowing is
// rejected.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cms/sketch.hpp"

namespace cms {

// Filesystem-level failures: missing files, unwritable paths.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally bad content: wrong magic, truncation, unsupported layout.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr char kStreamMagic[8] = {'C', 'M', 'S', 'T', 'R', 'M', '0', '1'};
inline constexpr char kSketchMagic[8] = {'C', 'M', 'S', 'K', 'C', 'H', '0', '1'};
inline constexpr std::uint32_t kSketchFormatVersion = 1;

namespace detail {

class ByteWriter {
  public:
    explicit ByteWriter(const std::filesystem::path& path)
        : path_(path.string()), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) {
            throw IoError("cannot open for writing: " + path_);
        }
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u32(std::uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void finish() {
        out_.flush();
        if (!out_) {
            throw IoError("write failed: " + path_);
        }
    }

  private:
    std::string path_;
    std::ofstream out_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::filesystem::path& path)
        : path_(path.string()), in_(path, std::ios::binary) {
        if (!in_) {
            throw IoError("cannot open for reading: " + path_);
        }
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw FormatError("truncated file: " + path_);
        }
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | std::uint64_t(u32()) << 32;
    }
    double f64() { return std::bit_cast<double>(u64()); }

    void expect_magic(const char (&magic)[8], const char* what) {
        char found[8];
        bytes(found, 8);
        if (std::memcmp(found, magic, 8) != 0) {
            throw FormatError(std::string("not a ") + what + " file: " + path_);
        }
    }

    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ifstream in_;
};

} // namespace detail

inline void save_stream(const std::filesystem::path& path, std::span<const std::uint32_t> items) {
    detail::ByteWriter w(path);
    w.bytes(kStreamMagic, 8);
    w.u64(items.size());
    for (std::uint32_t item : items) {
        w.u32(item);
    }
    w.finish();
}

inline std::vector<std::uint32_t> load_stream(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    r.expect_magic(kStreamMagic, "stream");
    const std::uint64_t count = r.u64();
    std::vector<std::uint32_t> items;
    items.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        items.push_back(r.u32());
    }
    return items;
}

struct SketchFileInfo {
    std::uint32_t version = 0;
    std::uint32_t counter_bits = 0;
    std::uint32_t depth = 0;
    std::uint32_t width = 0;
    bool saturated = false;
    std::string prng;
    double epsilon = 0.0;
    double delta = 0.0;
    std::uint64_t items_processed = 0;
};

namespace detail {

inline SketchFileInfo read_sketch_header(ByteReader& r) {
    r.expect_magic(kSketchMagic, "sketch");
    SketchFileInfo info;
    info.version = r.u32();
    if (info.version != kSketchFormatVersion) {
        throw FormatError("unsupported sketch format version in " + r.path());
    }
    info.counter_bits = r.u32();
    if (info.counter_bits != 32 && info.counter_bits != 64) {
        throw FormatError("unsupported counter width in " + r.path());
    }
    info.depth = r.u32();
    info.width = r.u32();
    const std::uint32_t flags = r.u32();
    info.saturated = (flags & 1u) != 0;
    const std::uint32_t prng_len = r.u32();
    if (prng_len > 64) {
        throw FormatError("implausible generator id in " + r.path());
    }
    info.prng.resize(prng_len);
    r.bytes(info.prng.data(), prng_len);
    if (info.prng != kPrngId) {
        throw FormatError("sketch built with unknown generator '" + info.prng + "' in " + r.path());
    }
    info.epsilon = r.f64();
    info.delta = r.f64();
    info.items_processed = r.u64();
    return info;
}

} // namespace detail

inline SketchFileInfo peek_sketch(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    return detail::read_sketch_header(r);
}

template <std::unsigned_integral Counter>
void save_sketch(const CountMinSketch<Counter>& sketch, const std::filesystem::path& path) {
    static_assert(sizeof(Counter) == 4 || sizeof(Counter) == 8,
                  "sketch files hold 32- or 64-bit counters");
    detail::ByteWriter w(path);
    w.bytes(kSketchMagic, 8);
    w.u32(kSketchFormatVersion);
    w.u32(sizeof(Counter) * 8);
    w.u32(static_cast<std::uint32_t>(sketch.depth()));
    w.u32(static_cast<std::uint32_t>(sketch.width()));
    w.u32(sketch.saturated() ? 1u : 0u);
    w.u32(static_cast<std::uint32_t>(kPrngId.size()));
    w.bytes(kPrngId.data(), kPrngId.size());
    w.f64(sketch.params().epsilon);
    w.f64(sketch.params().delta);
    w.u64(sketch.items_processed());
    for (std::uint64_t seed : sketch.seeds()) {
        w.u64(seed);
    }
    for (std::size_t r = 0; r < sketch.depth(); ++r) {
        for (Counter c : sketch.row_counters(r)) {
            if constexpr (sizeof(Counter) == 4) {
                w.u32(static_cast<std::uint32_t>(c));
            } else {
                w.u64(static_cast<std::uint64_t>(c));
            }
        }
    }
    w.finish();
}

template <std::unsigned_integral Counter = std::uint32_t>
CountMinSketch<Counter> load_sketch(const std::filesystem::path& path) {
    static_assert(sizeof(Counter) == 4 || sizeof(Counter) == 8,
                  "sketch files hold 32- or 64-bit counters");
    detail::ByteReader r(path);
    const SketchFileInfo info = detail::read_sketch_header(r);
    if (info.counter_bits > sizeof(Counter) * 8) {
        throw FormatError("sketch file " + r.path() + " holds " + std::to_string(info.counter_bits) +
                          "-bit counters; narrowing load rejected");
    }

    SketchParams params;
    params.epsilon = info.epsilon;
    params.delta = info.delta;
    params.depth = info.depth;
    params.width = info.width;
    params.depth_mode = DepthMode::explicit_rows;
    params.validate();

    std::vector<std::uint64_t> seeds(info.depth);
    for (auto& s : seeds) {
        s = r.u64();
    }

    std::vector<Counter> counters;
    counters.reserve(std::size_t(info.depth) * info.width);
    for (std::uint64_t i = 0; i < std::uint64_t(info.depth) * info.width; ++i) {
        counters.push_back(info.counter_bits == 32 ? static_cast<Counter>(r.u32())
                                                   : static_cast<Counter>(r.u64()));
    }

    CountMinSketch<Counter> sketch(params, std::move(seeds));
    sketch.restore(info.items_processed, info.saturated, counters);
    return sketch;
}

} // namespace cms
