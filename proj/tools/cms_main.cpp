// cms: command-line harness around the sketch library. Subcommands:
//   gen    synthesize a stream file (uniform or zipf)
//   build  construct a sketch from a stream file under a chosen strategy
//   query  point-estimate items against a sketch file
//   eval   compare a sketch against the exact counts of its stream
//   bench  run a configuration matrix and emit CSV
//
// Reports are machine-consumable: JSON for single runs, CSV for matrices.
// Exit codes: 0 success, 2 usage, 3 file format, 4 validation, 5 I/O.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cms/cms.hpp"

using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitValidation = 4;
constexpr int kExitIo = 5;

unsigned default_threads() {
    if (const char* env = std::getenv("CMS_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) {
            return static_cast<unsigned>(v);
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

cms::Distribution parse_distribution(const std::string& name) {
    if (name == "uniform") {
        return cms::Distribution::uniform;
    }
    if (name == "zipf") {
        return cms::Distribution::zipf;
    }
    throw std::invalid_argument("unknown distribution: " + name);
}

cms::Strategy parse_strategy(const std::string& name) {
    if (name == "seq") return cms::Strategy::sequential;
    if (name == "multi") return cms::Strategy::multi_table;
    if (name == "naive-sync") return cms::Strategy::naive_sync;
    if (name == "naive-relaxed") return cms::Strategy::naive_relaxed;
    if (name == "buffered") return cms::Strategy::buffered;
    if (name == "buffered-hetero") return cms::Strategy::buffered_hetero;
    throw std::invalid_argument("unknown build mode: " + name);
}

const char* strategy_name(cms::Strategy s) {
    switch (s) {
        case cms::Strategy::sequential: return "seq";
        case cms::Strategy::multi_table: return "multi";
        case cms::Strategy::naive_sync: return "naive-sync";
        case cms::Strategy::naive_relaxed: return "naive-relaxed";
        case cms::Strategy::buffered: return "buffered";
        case cms::Strategy::buffered_hetero: return "buffered-hetero";
    }
    return "?";
}

struct BuildFlags {
    double eps = 1e-3;
    double delta = 0.003;
    std::size_t rows = 0; // 0 = derive from delta
    std::string width_mode = "prime";
    unsigned threads = 0; // 0 = CMS_THREADS or hardware
    std::size_t batch = 1024;
    std::string mode = "buffered";
    double slowdown = 1.0;
    std::uint32_t spin_units = 0;
    std::uint64_t seed = 1;
    bool wide = false;
    std::vector<int> affinity;
};

cms::SketchParams params_from_flags(const BuildFlags& flags) {
    const auto width_mode = flags.width_mode == "ceil-e" ? cms::WidthMode::ceil_e_over_eps
                                                         : cms::WidthMode::prime_after_2_over_eps;
    if (flags.width_mode != "prime" && flags.width_mode != "ceil-e") {
        throw std::invalid_argument("unknown width mode: " + flags.width_mode);
    }
    const auto depth_mode =
        flags.rows ? cms::DepthMode::explicit_rows : cms::DepthMode::ceil_ln_inv_delta;
    return cms::SketchParams::from_error_bounds(flags.eps, flags.delta, width_mode, depth_mode,
                                                flags.rows);
}

struct BuildOutcome {
    cms::Strategy strategy;
    unsigned tau = 1;
    std::size_t batch = 0;
    std::size_t depth = 0;
    std::size_t width = 0;
    unsigned counter_bits = 32;
    std::uint64_t items = 0;
    double total_seconds = 0;
    cms::PhaseTimes phases;
    std::uint64_t memory_bits = 0;
    std::optional<cms::HeteroReport> hetero;

    double throughput_mips() const {
        return total_seconds > 0
                   ? static_cast<double>(items) / total_seconds / 1e6
                   : 0.0;
    }
};

template <typename Counter>
BuildOutcome run_build(std::span<const std::uint32_t> stream, const cms::SketchParams& params,
                       const BuildFlags& flags, cms::CountMinSketch<Counter>& sketch) {
    BuildOutcome out;
    out.strategy = parse_strategy(flags.mode);
    out.tau = flags.threads ? flags.threads : default_threads();
    out.batch = flags.batch;
    out.depth = params.depth;
    out.width = params.width;
    out.counter_bits = sizeof(Counter) * 8;
    out.items = stream.size();

    const auto t0 = std::chrono::steady_clock::now();
    switch (out.strategy) {
        case cms::Strategy::sequential:
            out.tau = 1;
            cms::build_sequential(stream, sketch);
            break;
        case cms::Strategy::multi_table:
            sketch = cms::build_multi_table<Counter>(stream, params, flags.seed, out.tau);
            break;
        case cms::Strategy::naive_sync:
            cms::build_naive_parallel(stream, sketch, out.tau, cms::SyncMode::synchronized);
            break;
        case cms::Strategy::naive_relaxed:
            cms::build_naive_parallel(stream, sketch, out.tau, cms::SyncMode::relaxed);
            break;
        case cms::Strategy::buffered:
            cms::build_buffered(stream, sketch, out.tau, flags.batch, nullptr, &out.phases);
            break;
        case cms::Strategy::buffered_hetero: {
            cms::HeteroOptions options;
            options.batch = flags.batch;
            // One worker pair per two requested threads, capped at the
            // number of row pairs.
            const std::size_t row_pairs = params.depth / 2;
            options.worker_pairs =
                std::max<std::size_t>(1, std::min<std::size_t>(out.tau / 2, row_pairs));
            options.slowdown = {flags.slowdown, flags.spin_units};
            options.affinity = flags.affinity;
            out.hetero = cms::build_buffered_hetero(stream, sketch, options);
            out.phases = out.hetero->times;
            out.tau = static_cast<unsigned>(2 * options.worker_pairs);
            break;
        }
    }
    out.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::uint64_t n_for_bits = out.items ? out.items : 1;
    out.memory_bits = cms::memory_footprint_bits(
        params.depth, params.width, out.tau, flags.batch, n_for_bits,
        out.strategy == cms::Strategy::multi_table ? cms::MemoryModel::multi_table
                                                   : cms::MemoryModel::single_table_buffered);
    return out;
}

json outcome_to_json(const BuildOutcome& out) {
    json j{{"strategy", strategy_name(out.strategy)},
           {"tau", out.tau},
           {"batch", out.batch},
           {"depth", out.depth},
           {"width", out.width},
           {"counter_bits", out.counter_bits},
           {"items", out.items},
           {"total_seconds", out.total_seconds},
           {"hash_seconds", out.phases.hash_seconds},
           {"update_seconds", out.phases.update_seconds},
           {"throughput_mips", out.throughput_mips()},
           {"memory_bits", out.memory_bits}};
    if (out.hetero) {
        json hash_trace = json::array();
        for (const auto& s : out.hetero->hash_trace) {
            hash_trace.push_back({{"batch", s.batch}, {"f2s", s.ratio}});
        }
        json update_trace = json::array();
        for (const auto& s : out.hetero->update_trace) {
            update_trace.push_back({{"batch", s.batch}, {"f2s", s.ratio}});
        }
        j["hetero"] = {{"hash_trace", std::move(hash_trace)},
                       {"update_trace", std::move(update_trace)},
                       {"hash_frozen_at", out.hetero->hash_frozen_at},
                       {"update_frozen_at", out.hetero->update_frozen_at},
                       {"hash_f2s_final", out.hetero->hash_slow_share
                            ? double(out.hetero->hash_fast_share) / double(out.hetero->hash_slow_share)
                            : 0.0},
                       {"update_f2s_final", out.hetero->update_slow_share
                            ? double(out.hetero->update_fast_share) /
                                  double(out.hetero->update_slow_share)
                            : 0.0}};
    }
    return j;
}

const char* kCsvHeader =
    "strategy,tau,batch,depth,width,counter_bits,distribution,alpha,items,repeats,"
    "hash_seconds,update_seconds,total_seconds,throughput_mips,memory_bits";

std::string outcome_to_csv_row(const BuildOutcome& out, const std::string& dist, double alpha,
                               unsigned repeats) {
    std::ostringstream row;
    row << strategy_name(out.strategy) << ',' << out.tau << ',' << out.batch << ',' << out.depth
        << ',' << out.width << ',' << out.counter_bits << ',' << dist << ',' << alpha << ','
        << out.items << ',' << repeats << ',' << out.phases.hash_seconds << ','
        << out.phases.update_seconds << ',' << out.total_seconds << ',' << out.throughput_mips()
        << ',' << out.memory_bits;
    return row.str();
}

json accuracy_to_json(const cms::AccuracyReport& report) {
    return json{{"items", report.items_processed},
                {"distinct", report.distinct},
                {"epsilon", report.epsilon},
                {"threshold", report.threshold},
                {"max_overestimate", report.max_overestimate},
                {"min_deviation", report.min_deviation},
                {"mean_overestimate", report.mean_overestimate},
                {"over_threshold", report.over_threshold},
                {"over_threshold_fraction", report.over_threshold_fraction}};
}

int cmd_gen(const std::string& dist, double alpha, std::uint64_t n, std::uint64_t count,
            std::uint64_t seed, const std::string& out_path) {
    cms::StreamSpec spec{parse_distribution(dist), alpha, n, count, seed};
    auto stream = cms::generate_stream(spec);
    cms::save_stream(out_path, stream);
    std::cout << json{{"written", out_path},
                      {"distribution", dist},
                      {"alpha", alpha},
                      {"universe", n},
                      {"items", count},
                      {"seed", seed}}
                     .dump()
              << "\n";
    return 0;
}

template <typename Counter>
int cmd_build_with(const BuildFlags& flags, const std::string& in_path,
                   const std::string& out_path, bool csv) {
    const auto stream = cms::load_stream(in_path);
    const auto params = params_from_flags(flags);
    cms::CountMinSketch<Counter> sketch(params, flags.seed);
    auto outcome = run_build<Counter>(stream, params, flags, sketch);
    if (!out_path.empty()) {
        cms::save_sketch(sketch, out_path);
    }
    if (csv) {
        std::cout << kCsvHeader << "\n"
                  << outcome_to_csv_row(outcome, "file", 0.0, 1) << "\n";
    } else {
        json j = outcome_to_json(outcome);
        j["input"] = in_path;
        if (!out_path.empty()) {
            j["sketch"] = out_path;
        }
        std::cout << j.dump() << "\n";
    }
    return 0;
}

int cmd_query(const std::string& sketch_path, const std::vector<std::uint64_t>& items,
              const std::string& items_file) {
    std::vector<std::uint32_t> keys;
    for (std::uint64_t v : items) {
        keys.push_back(static_cast<std::uint32_t>(v));
    }
    if (!items_file.empty()) {
        std::ifstream in(items_file);
        if (!in) {
            throw cms::IoError("cannot open items file: " + items_file);
        }
        std::uint64_t v;
        while (in >> v) {
            keys.push_back(static_cast<std::uint32_t>(v));
        }
    }
    const auto info = cms::peek_sketch(sketch_path);
    if (info.counter_bits == 64) {
        auto sketch = cms::load_sketch<std::uint64_t>(sketch_path);
        for (std::uint32_t k : keys) {
            std::cout << k << "\t" << sketch.query(k) << "\n";
        }
    } else {
        auto sketch = cms::load_sketch<std::uint32_t>(sketch_path);
        for (std::uint32_t k : keys) {
            std::cout << k << "\t" << sketch.query(k) << "\n";
        }
    }
    return 0;
}

template <typename Counter>
int cmd_eval_with(const std::string& sketch_path, const std::string& stream_path, double eps) {
    auto sketch = cms::load_sketch<Counter>(sketch_path);
    auto stream = cms::load_stream(stream_path);
    cms::ExactOracle oracle{std::span<const std::uint32_t>(stream)};
    double epsilon = eps;
    if (epsilon <= 0.0) {
        epsilon = sketch.params().epsilon > 0.0 ? sketch.params().epsilon
                                                : 2.0 / static_cast<double>(sketch.width());
    }
    auto report = cms::eval_accuracy(sketch, oracle, epsilon);
    json j = accuracy_to_json(report);
    j["sketch"] = sketch_path;
    j["stream"] = stream_path;
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_bench(const std::vector<double>& eps_list, const std::vector<std::string>& dist_list,
              const std::vector<std::string>& mode_list, const std::vector<unsigned>& tau_list,
              const std::vector<double>& alpha_list, double delta, std::size_t rows,
              std::uint64_t count, std::uint64_t universe, std::size_t batch, unsigned repeats,
              std::uint64_t seed, double slowdown, std::uint32_t spin_units, bool accuracy,
              const std::string& out_path) {
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) {
            throw cms::IoError("cannot open for writing: " + out_path);
        }
        out = &file;
    }
    *out << kCsvHeader;
    if (accuracy) {
        *out << ",max_overestimate,over_threshold_fraction";
    }
    *out << "\n";

    for (const auto& dist_name : dist_list) {
        const auto dist = parse_distribution(dist_name);
        const auto& alphas = dist == cms::Distribution::zipf
                                 ? alpha_list
                                 : std::vector<double>{0.0};
        for (double alpha : alphas) {
            cms::StreamSpec spec{dist, dist == cms::Distribution::zipf ? alpha : 1.0, universe,
                                 count, seed};
            const auto stream = cms::generate_stream(spec);
            std::optional<cms::ExactOracle> oracle;
            if (accuracy) {
                oracle.emplace(std::span<const std::uint32_t>(stream));
            }
            for (double eps : eps_list) {
                for (const auto& mode : mode_list) {
                    for (unsigned tau : tau_list) {
                        BuildFlags flags;
                        flags.eps = eps;
                        flags.delta = delta;
                        flags.rows = rows;
                        flags.threads = tau;
                        flags.batch = batch;
                        flags.mode = mode;
                        flags.slowdown = slowdown;
                        flags.spin_units = spin_units;
                        flags.seed = seed;
                        const auto params = params_from_flags(flags);

                        BuildOutcome sum;
                        cms::AccuracyReport acc;
                        for (unsigned rep = 0; rep < repeats; ++rep) {
                            cms::CountMinSketch<> sketch(params, seed);
                            auto one = run_build<std::uint32_t>(
                                std::span<const std::uint32_t>(stream), params, flags, sketch);
                            if (rep == 0) {
                                sum = one;
                            } else {
                                sum.total_seconds += one.total_seconds;
                                sum.phases.hash_seconds += one.phases.hash_seconds;
                                sum.phases.update_seconds += one.phases.update_seconds;
                            }
                            if (accuracy && rep == 0) {
                                acc = cms::eval_accuracy(sketch, *oracle, eps);
                            }
                        }
                        sum.total_seconds /= repeats;
                        sum.phases.hash_seconds /= repeats;
                        sum.phases.update_seconds /= repeats;
                        *out << outcome_to_csv_row(sum, dist_name, alpha, repeats);
                        if (accuracy) {
                            *out << ',' << acc.max_overestimate << ','
                                 << acc.over_threshold_fraction;
                        }
                        *out << "\n";
                    }
                }
            }
        }
    }
    out->flush();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Count-Min Sketch toolkit: stream generation, parallel builds, queries, "
                 "accuracy evaluation, benchmarks"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a stream file");
    std::string gen_dist = "zipf";
    double gen_alpha = 1.1;
    std::uint64_t gen_n = 1u << 20;
    std::uint64_t gen_count = 1u << 22;
    std::uint64_t gen_seed = 1;
    std::string gen_out;
    gen->add_option("--dist", gen_dist, "uniform | zipf")->capture_default_str();
    gen->add_option("--alpha", gen_alpha, "zipf shape parameter")->capture_default_str();
    gen->add_option("--n", gen_n, "universe size")->capture_default_str();
    gen->add_option("--count", gen_count, "stream length N")->capture_default_str();
    gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();
    gen->add_option("--out", gen_out, "output stream file")->required();

    // build
    auto* build = app.add_subcommand("build", "Build a sketch from a stream file");
    BuildFlags bf;
    std::string build_in;
    std::string build_out;
    bool build_csv = false;
    build->add_option("--in", build_in, "input stream file")->required();
    build->add_option("--out", build_out, "output sketch file");
    build->add_option("--eps", bf.eps, "error factor epsilon")->capture_default_str();
    build->add_option("--delta", bf.delta, "error probability delta")->capture_default_str();
    build->add_option("--rows", bf.rows, "explicit row count (overrides delta)");
    build->add_option("--width-mode", bf.width_mode, "prime | ceil-e")->capture_default_str();
    build->add_option("--threads", bf.threads, "worker count (default: CMS_THREADS or hardware)");
    build->add_option("--batch", bf.batch, "batch size for buffered modes")->capture_default_str();
    build->add_option("--mode", bf.mode,
                      "seq | multi | naive-sync | naive-relaxed | buffered | buffered-hetero")
        ->capture_default_str();
    build->add_option("--slowdown", bf.slowdown, "emulated slow-worker factor (hetero)")
        ->capture_default_str();
    build->add_option("--spin-units", bf.spin_units,
                      "per-item synthetic work units for emulation (0 = auto)");
    build->add_option("--seed", bf.seed, "master seed for the hash family")->capture_default_str();
    build->add_flag("--wide", bf.wide, "use 64-bit counters");
    build->add_flag("--csv", build_csv, "report as CSV instead of JSON");
    build->add_option("--affinity", bf.affinity, "worker->cpu pinning hints (best effort)");

    // query
    auto* query = app.add_subcommand("query", "Estimate item frequencies");
    std::string query_sketch;
    std::vector<std::uint64_t> query_items;
    std::string query_items_file;
    query->add_option("--sketch", query_sketch, "sketch file")->required();
    query->add_option("--item", query_items, "item to estimate (repeatable)");
    query->add_option("--items-file", query_items_file, "file with one item per line");

    // eval
    auto* eval = app.add_subcommand("eval", "Accuracy report against the exact counts");
    std::string eval_sketch;
    std::string eval_stream;
    double eval_eps = 0.0;
    eval->add_option("--sketch", eval_sketch, "sketch file")->required();
    eval->add_option("--stream", eval_stream, "stream the sketch was built from")->required();
    eval->add_option("--eps", eval_eps, "epsilon for the eps*N threshold (default: from sketch)");

    // bench
    auto* bench = app.add_subcommand("bench", "Run a configuration matrix, emit CSV");
    std::vector<double> bench_eps{1e-3};
    std::vector<std::string> bench_dists{"zipf"};
    std::vector<std::string> bench_modes{"buffered"};
    std::vector<unsigned> bench_taus{default_threads()};
    std::vector<double> bench_alphas{1.1};
    double bench_delta = 0.003;
    std::size_t bench_rows = 8;
    std::uint64_t bench_count = 1u << 22;
    std::uint64_t bench_n = 1u << 20;
    std::size_t bench_batch = 1024;
    unsigned bench_repeats = 10;
    std::uint64_t bench_seed = 1;
    double bench_slowdown = 1.0;
    std::uint32_t bench_spin = 0;
    bool bench_accuracy = false;
    std::string bench_out;
    bench->add_option("--eps", bench_eps, "epsilon values")->capture_default_str();
    bench->add_option("--dist", bench_dists, "distributions")->capture_default_str();
    bench->add_option("--mode", bench_modes, "build modes")->capture_default_str();
    bench->add_option("--tau", bench_taus, "worker counts");
    bench->add_option("--alpha", bench_alphas, "zipf shapes")->capture_default_str();
    bench->add_option("--delta", bench_delta, "error probability")->capture_default_str();
    bench->add_option("--rows", bench_rows, "explicit rows (0 = from delta)")->capture_default_str();
    bench->add_option("--count", bench_count, "stream length per run")->capture_default_str();
    bench->add_option("--n", bench_n, "universe size")->capture_default_str();
    bench->add_option("--batch", bench_batch, "batch size")->capture_default_str();
    bench->add_option("--repeats", bench_repeats, "runs averaged per row")->capture_default_str();
    bench->add_option("--seed", bench_seed, "stream and hash seed")->capture_default_str();
    bench->add_option("--slowdown", bench_slowdown, "hetero slow-worker factor")
        ->capture_default_str();
    bench->add_option("--spin-units", bench_spin, "hetero emulation work units");
    bench->add_flag("--accuracy", bench_accuracy, "append accuracy columns");
    bench->add_option("--out", bench_out, "write CSV to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) {
            return cmd_gen(gen_dist, gen_alpha, gen_n, gen_count, gen_seed, gen_out);
        }
        if (*build) {
            return bf.wide ? cmd_build_with<std::uint64_t>(bf, build_in, build_out, build_csv)
                           : cmd_build_with<std::uint32_t>(bf, build_in, build_out, build_csv);
        }
        if (*query) {
            return cmd_query(query_sketch, query_items, query_items_file);
        }
        if (*eval) {
            const auto info = cms::peek_sketch(eval_sketch);
            return info.counter_bits == 64
                       ? cmd_eval_with<std::uint64_t>(eval_sketch, eval_stream, eval_eps)
                       : cmd_eval_with<std::uint32_t>(eval_sketch, eval_stream, eval_eps);
        }
        if (*bench) {
            return cmd_bench(bench_eps, bench_dists, bench_modes, bench_taus, bench_alphas,
                             bench_delta, bench_rows, bench_count, bench_n, bench_batch,
                             bench_repeats, bench_seed, bench_slowdown, bench_spin, bench_accuracy,
                             bench_out);
        }
    } catch (const cms::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const cms::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
