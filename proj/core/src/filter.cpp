#include "odrift/filter.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace odrift::filter {

double FilterModel::score(std::span<const double> x) const {
    if (degenerate) return constant_pass ? 1.0 : 0.0;
    return net.infer(x)[0];
}

bool FilterModel::pass(std::span<const double> x) const {
    if (degenerate) return constant_pass;
    return score(x) >= threshold;
}

FilterModel train_filter(std::span<const Vector> xs, std::span<const std::size_t> labels, std::size_t target_class,
                         const FilterTrainConfig& config) {
    if (xs.size() != labels.size()) throw StructuralError("train_filter: sample/label count mismatch");
    if (xs.empty()) throw PreconditionError("train_filter: no data");
    FilterModel f;
    f.target_class = target_class;
    nn::Rng rng(config.seed);
    f.net = nn::Network::dense({xs.front().size(), config.hidden, 1},
                               {nn::Activation::relu, nn::Activation::sigmoid}, rng);

    const auto positives = static_cast<std::size_t>(
        std::count(labels.begin(), labels.end(), target_class));
    if (positives == 0 || positives == labels.size()) {
        f.degenerate = true;
        f.constant_pass = positives > 0;
        return f;
    }

    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    auto holdout = static_cast<std::size_t>(std::round(config.holdout_fraction * static_cast<double>(xs.size())));
    holdout = std::clamp<std::size_t>(holdout, 1, xs.size() - 1);
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
    std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));

    nn::Optimizer opt(config.optimizer, f.net);
    auto grads = nn::Gradients::zeros_like(f.net);
    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::shuffle(train.begin(), train.end(), rng);
        for (std::size_t start = 0; start < train.size(); start += batch) {
            const auto end = std::min(train.size(), start + batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            grads.set_zero();
            for (auto i = start; i < end; ++i) {
                const auto& p = f.net.forward(xs[train[i]]);
                const double t[1] = {labels[train[i]] == target_class ? 1.0 : 0.0};
                auto g = nn::bce_grad(p, t);
                g[0] *= inv;
                f.net.backward(g, grads, false);
            }
            opt.step(f.net, grads, "filter");
        }
    }

    std::vector<double> pos_scores;
    for (auto i : held) {
        if (labels[i] == target_class) pos_scores.push_back(f.net.infer(xs[i])[0]);
    }
    if (pos_scores.empty()) {
        for (auto i : train) {
            if (labels[i] == target_class) pos_scores.push_back(f.net.infer(xs[i])[0]);
        }
    }
    std::sort(pos_scores.begin(), pos_scores.end());
    // Allow at most (1 - recall) of the held-out positives below threshold.
    const auto drop = static_cast<std::size_t>(
        std::floor((1.0 - config.target_recall) * static_cast<double>(pos_scores.size())));
    f.threshold = pos_scores[std::min(drop, pos_scores.size() - 1)];
    return f;
}

double filter_recall(const FilterModel& f, std::span<const Vector> xs, std::span<const std::size_t> labels) {
    std::size_t pos = 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (labels[i] != f.target_class) continue;
        ++pos;
        hit += f.pass(xs[i]);
    }
    return pos == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(pos);
}

}  // namespace odrift::filter
