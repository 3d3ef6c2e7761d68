#include "odrift/task_model.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace odrift::task {

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw PreconditionError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

Classifier::Classifier(nn::Network net, std::size_t class_count) : net_(std::move(net)), class_count_(class_count) {
    if (class_count_ < 1 || net_.output_dim() != class_count_) {
        throw StructuralError("classifier output width must equal the class count");
    }
}

Classifier Classifier::make(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t class_count,
                            std::uint64_t seed) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(class_count);
    std::vector<nn::Activation> acts(dims.size() - 1, nn::Activation::relu);
    acts.back() = nn::Activation::identity;
    nn::Rng rng(seed);
    return Classifier(nn::Network::dense(dims, acts, rng), class_count);
}

void Classifier::set_standardization(Vector shift, Vector scale) {
    if (shift.size() != scale.size() || (!shift.empty() && shift.size() != input_dim())) {
        throw StructuralError("standardization does not match the classifier input");
    }
    shift_ = std::move(shift);
    scale_ = std::move(scale);
}

Vector Classifier::standardize(std::span<const double> x) const {
    if (x.size() != input_dim()) throw StructuralError("classifier input dimension mismatch");
    Vector v(x.begin(), x.end());
    if (shift_.empty()) return v;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - shift_[i]) * scale_[i];
    return v;
}

Vector Classifier::probabilities(std::span<const double> x) const { return nn::softmax(net_.infer(standardize(x))); }

std::size_t Classifier::predict(std::span<const double> x) const { return argmax(probabilities(x)); }

double Classifier::accuracy(std::span<const Vector> xs, std::span<const std::size_t> labels) const {
    if (xs.size() != labels.size()) throw StructuralError("accuracy: sample/label count mismatch");
    if (xs.empty()) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) hit += predict(xs[i]) == labels[i];
    return static_cast<double>(hit) / static_cast<double>(xs.size());
}

double Classifier::train(std::span<const Vector> xs, std::span<const std::size_t> labels, const TrainConfig& config) {
    if (xs.size() != labels.size()) throw StructuralError("train: sample/label count mismatch");
    for (auto l : labels) {
        if (l >= class_count_) throw StructuralError("train: label out of range");
    }
    if (xs.empty() || config.epochs == 0) return 0.0;
    if (shift_.empty()) {
        const std::size_t dim = input_dim();
        Vector mean(dim, 0.0);
        Vector var(dim, 0.0);
        for (const auto& x : xs) {
            if (x.size() != dim) throw StructuralError("train: sample dimension mismatch");
            for (std::size_t i = 0; i < dim; ++i) mean[i] += x[i];
        }
        for (auto& m : mean) m /= static_cast<double>(xs.size());
        for (const auto& x : xs) {
            for (std::size_t i = 0; i < dim; ++i) var[i] += (x[i] - mean[i]) * (x[i] - mean[i]);
        }
        Vector scale(dim);
        for (std::size_t i = 0; i < dim; ++i) scale[i] = 1.0 / std::max(std::sqrt(var[i] / static_cast<double>(xs.size())), 1e-6);
        set_standardization(std::move(mean), std::move(scale));
    }
    std::vector<Vector> inputs;
    inputs.reserve(xs.size());
    for (const auto& x : xs) inputs.push_back(standardize(x));
    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);

    nn::Optimizer opt(config.optimizer, net_);
    nn::Rng rng(config.seed);
    auto grads = nn::Gradients::zeros_like(net_);
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Vector g;
    double epoch_loss = 0.0;
    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const auto end = std::min(order.size(), start + batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            grads.set_zero();
            for (auto i = start; i < end; ++i) {
                const auto& logits = net_.forward(inputs[order[i]]);
                epoch_loss += nn::softmax_cross_entropy(logits, labels[order[i]], &g);
                for (auto& v : g) v *= inv;
                net_.backward(g, grads, false);
            }
            opt.step(net_, grads, "classifier");
        }
    }
    return epoch_loss / static_cast<double>(xs.size());
}

}  // namespace odrift::task
