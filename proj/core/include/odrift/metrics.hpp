#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace odrift::metrics {

// Accuracy over consecutive windows of `window` items; the last window may
// be shorter. Windows partition the input exactly.
std::vector<double> windowed_accuracy(std::span<const std::uint8_t> correct, std::size_t window);
double accuracy(std::span<const std::uint8_t> correct);

struct DriftScore {
    std::size_t promotions = 0;
    std::size_t true_positives = 0;
    std::size_t sources_introduced = 0;
    std::size_t sources_detected = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// A promotion counts when at least `purity` of its members share one source
// that no earlier promotion already claimed.
DriftScore score_drift(const std::vector<std::vector<std::size_t>>& promotion_sources,
                       std::size_t sources_introduced, double purity = 0.8);

// Majority source and its share among `sources`.
std::pair<std::size_t, double> majority(std::span<const std::size_t> sources);

// 1 - |predicted - truth| / truth, floored at 0. With truth 0 the answer is
// 1 when predicted is 0 and 0 otherwise.
double query_accuracy(std::uint64_t predicted, std::uint64_t truth);

}  // namespace odrift::metrics
