#include "odrift/metrics.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace odrift::metrics {

std::vector<double> windowed_accuracy(std::span<const std::uint8_t> correct, std::size_t window) {
    if (window == 0) throw PreconditionError("window must be positive");
    std::vector<double> out;
    for (std::size_t start = 0; start < correct.size(); start += window) {
        const auto end = std::min(correct.size(), start + window);
        out.push_back(accuracy(correct.subspan(start, end - start)));
    }
    return out;
}

double accuracy(std::span<const std::uint8_t> correct) {
    if (correct.empty()) return 0.0;
    std::size_t hit = 0;
    for (auto c : correct) hit += c != 0;
    return static_cast<double>(hit) / static_cast<double>(correct.size());
}

std::pair<std::size_t, double> majority(std::span<const std::size_t> sources) {
    if (sources.empty()) return {0, 0.0};
    std::map<std::size_t, std::size_t> counts;
    for (auto s : sources) ++counts[s];
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return {best->first, static_cast<double>(best->second) / static_cast<double>(sources.size())};
}

DriftScore score_drift(const std::vector<std::vector<std::size_t>>& promotion_sources,
                       std::size_t sources_introduced, double purity) {
    DriftScore s;
    s.promotions = promotion_sources.size();
    s.sources_introduced = sources_introduced;
    std::set<std::size_t> claimed;
    for (const auto& members : promotion_sources) {
        const auto [src, share] = majority(members);
        if (!members.empty() && share >= purity && claimed.insert(src).second) ++s.true_positives;
    }
    s.sources_detected = claimed.size();
    s.precision = s.promotions ? static_cast<double>(s.true_positives) / static_cast<double>(s.promotions) : 0.0;
    s.recall = sources_introduced ? static_cast<double>(s.sources_detected) / static_cast<double>(sources_introduced) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

double query_accuracy(std::uint64_t predicted, std::uint64_t truth) {
    if (truth == 0) return predicted == 0 ? 1.0 : 0.0;
    const double err = std::abs(static_cast<double>(predicted) - static_cast<double>(truth)) / static_cast<double>(truth);
    return std::max(0.0, 1.0 - err);
}

}  // namespace odrift::metrics
