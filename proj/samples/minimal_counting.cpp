// Smallest useful example: sketch a skewed stream, compare a few estimates
// against exact counts.

#include <iostream>

#include "cms/cms.hpp"

int main() {
    const auto stream = cms::generate_stream(
        {cms::Distribution::zipf, /*alpha=*/1.2, /*universe=*/1 << 16, /*count=*/1 << 20,
         /*seed=*/7});

    // eps=1e-3 -> w=2003 columns, delta=0.003 -> d=6 rows.
    const auto params = cms::SketchParams::from_error_bounds(1e-3, 0.003);
    cms::CountMinSketch<> sketch(params, /*master_seed=*/42);
    for (std::uint32_t item : stream) {
        sketch.insert(item);
    }

    const cms::ExactOracle oracle(stream);
    std::cout << "item      estimate  exact\n";
    for (std::uint32_t item : {stream[0], stream[1], stream[2]}) {
        std::cout << item << "\t" << sketch.query(item) << "\t" << oracle.count(item) << "\n";
    }

    const auto report = cms::eval_accuracy(sketch, oracle, params.epsilon);
    std::cout << "distinct items: " << report.distinct
              << ", mean overestimate: " << report.mean_overestimate
              << ", fraction above eps*N: " << report.over_threshold_fraction << "\n";
    return 0;
}
