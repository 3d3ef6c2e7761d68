#pragma once

#include "odrift/numerics.hpp"

#include <cstdint>
#include <span>
#include <vector>

// Small dense classifiers used as task models, filters' big siblings and
// teachers for distillation.
namespace odrift::task {

using nn::Vector;

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    nn::OptimizerConfig optimizer;
    std::uint64_t seed = 1;
};

class Classifier {
public:
    Classifier() = default;
    Classifier(nn::Network net, std::size_t class_count);

    // Hidden layers use relu, the output layer emits logits.
    static Classifier make(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t class_count,
                           std::uint64_t seed);

    Vector probabilities(std::span<const double> x) const;
    std::size_t predict(std::span<const double> x) const;
    double accuracy(std::span<const Vector> xs, std::span<const std::size_t> labels) const;

    // Mini-batch softmax cross-entropy training; returns the mean loss of the
    // last epoch. An empty data set is a no-op. The first call also fixes the
    // per-feature input standardization from `xs`.
    double train(std::span<const Vector> xs, std::span<const std::size_t> labels, const TrainConfig& config);

    std::size_t class_count() const noexcept { return class_count_; }
    std::size_t input_dim() const { return net_.input_dim(); }
    std::size_t param_count() const { return net_.param_count(); }
    const nn::Network& network() const noexcept { return net_; }

    // Inputs are mapped to (x - shift) * scale before the network; empty
    // vectors mean no standardization.
    const Vector& shift() const noexcept { return shift_; }
    const Vector& scale() const noexcept { return scale_; }
    void set_standardization(Vector shift, Vector scale);
    Vector standardize(std::span<const double> x) const;

private:
    nn::Network net_;
    Vector shift_;
    Vector scale_;
    std::size_t class_count_ = 0;
};

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> v);

}  // namespace odrift::task
