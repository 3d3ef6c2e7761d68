#pragma once

#include "odrift/numerics.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Per-cluster binary gates for aggregation queries.
namespace odrift::filter {

using nn::Vector;

struct FilterModel {
    nn::Network net;  // [dim -> 8 relu -> 1 sigmoid]
    double threshold = 0.5;
    std::size_t target_class = 0;
    // Single-class training data: the gate is a constant.
    bool degenerate = false;
    bool constant_pass = true;

    double score(std::span<const double> x) const;
    bool pass(std::span<const double> x) const;
    std::size_t param_count() const { return net.param_count(); }
};

struct FilterTrainConfig {
    std::size_t hidden = 8;
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double target_recall = 0.95;
    double holdout_fraction = 0.2;
    nn::OptimizerConfig optimizer;
    std::uint64_t seed = 1;
};

// Trains on (x, label == target) and picks the largest threshold that keeps
// held-out recall at or above target_recall.
FilterModel train_filter(std::span<const Vector> xs, std::span<const std::size_t> labels, std::size_t target_class,
                         const FilterTrainConfig& config);

// Recall of the gate on (xs, labels) for its target class.
double filter_recall(const FilterModel& f, std::span<const Vector> xs, std::span<const std::size_t> labels);

}  // namespace odrift::filter
