#pragma once

#include "odrift/geometry.hpp"
#include "odrift/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace odrift::testing {

inline nn::Vector random_vector(std::size_t n, nn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    nn::Vector v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Dense net with 1-3 hidden layers of random widths and activations.
inline nn::Network random_net(nn::Rng& rng) {
    std::uniform_int_distribution<std::size_t> width(1, 9);
    std::uniform_int_distribution<std::size_t> depth(1, 3);
    std::uniform_int_distribution<int> act(0, 3);
    std::vector<std::size_t> dims{width(rng)};
    std::vector<nn::Activation> acts;
    const auto layers = depth(rng) + 1;
    for (std::size_t i = 0; i < layers; ++i) {
        dims.push_back(width(rng));
        acts.push_back(static_cast<nn::Activation>(act(rng)));
    }
    auto net = nn::Network::dense(dims, acts, rng);
    // Non-zero biases so that every parameter gets exercised.
    for (auto& l : net.mutable_layers()) l.bias = random_vector(l.bias.size(), rng, -0.5, 0.5);
    return net;
}

inline nn::Network rounded_to_f32(nn::Network net) {
    for (auto& l : net.mutable_layers()) {
        for (auto& w : l.weights.data) w = static_cast<float>(w);
        for (auto& b : l.bias) b = static_cast<float>(b);
    }
    return net;
}

inline double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

// Max relative error between backprop and central differences for the loss
// L = <g, net(x)>, over every parameter and every input coordinate.
inline double gradient_check(nn::Network net, const nn::Vector& x, const nn::Vector& g, double step = 1e-5) {
    auto loss = [&](const nn::Network& n, const nn::Vector& in) {
        const auto out = n.infer(in);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += g[i] * out[i];
        return s;
    };
    auto acc = nn::Gradients::zeros_like(net);
    net.forward(x);
    const auto input_grad = net.backward(g, acc, true);

    double worst = 0.0;
    auto& layers = net.mutable_layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto probe = [&](double& p, double analytic) {
            const double keep = p;
            p = keep + step;
            const double up = loss(net, x);
            p = keep - step;
            const double down = loss(net, x);
            p = keep;
            worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * step)));
        };
        for (std::size_t i = 0; i < layers[l].weights.data.size(); ++i) {
            probe(layers[l].weights.data[i], acc.layers[l].weights.data[i]);
        }
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i) probe(layers[l].bias[i], acc.layers[l].bias[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        worst = std::max(worst, relative_error(input_grad[i], (loss(net, xp) - loss(net, xm)) / (2.0 * step)));
    }
    return worst;
}

// Brute force: every contiguous window holding the peak with enough mass;
// narrowest wins, then the smaller lower edge.
inline std::pair<std::size_t, std::size_t> band_oracle(const std::vector<std::uint64_t>& bins, double delta) {
    const std::size_t n = bins.size();
    std::uint64_t total = 0, peak_count = 0;
    std::size_t peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += bins[i];
        if (bins[i] > peak_count) {
            peak_count = bins[i];
            peak = i;
        }
    }
    std::pair<std::size_t, std::size_t> best{0, n - 1};
    bool found = false;
    for (std::size_t lo = 0; lo <= peak; ++lo) {
        for (std::size_t hi = peak; hi < n; ++hi) {
            std::uint64_t m = 0;
            for (std::size_t i = lo; i <= hi; ++i) m += bins[i];
            if (static_cast<double>(m) / static_cast<double>(total) < delta) continue;
            const auto w = hi - lo, bw = best.second - best.first;
            if (!found || w < bw || (w == bw && lo < best.first)) {
                best = {lo, hi};
                found = true;
            }
        }
    }
    return best;
}

inline std::vector<std::uint64_t> random_bins(std::size_t n, nn::Rng& rng) {
    std::uniform_int_distribution<int> shape(0, 2);
    std::uniform_int_distribution<std::uint64_t> small(0, 20);
    std::vector<std::uint64_t> bins(n);
    switch (shape(rng)) {
        case 0:  // flat noise, frequent ties
            for (auto& b : bins) b = small(rng);
            break;
        case 1: {  // one bump
            std::normal_distribution<double> g(static_cast<double>(n) / 2.0, static_cast<double>(n) / 8.0);
            for (int i = 0; i < 500; ++i) {
                const auto k = std::clamp(static_cast<long>(g(rng)), 0L, static_cast<long>(n) - 1);
                ++bins[static_cast<std::size_t>(k)];
            }
            break;
        }
        default:  // sparse spikes
            for (auto& b : bins) b = small(rng) > 16 ? small(rng) * 10 : 0;
            break;
    }
    if (std::all_of(bins.begin(), bins.end(), [](std::uint64_t b) { return b == 0; })) bins[n / 3] = 1;
    return bins;
}

// Gaussian blob in `dim` dimensions around `center`.
inline std::vector<geometry::LatentVector> blob(std::size_t n, const std::vector<double>& center, double sigma,
                                                nn::Rng& rng) {
    std::normal_distribution<double> g(0.0, sigma);
    std::vector<geometry::LatentVector> out(n, center);
    for (auto& p : out) {
        for (auto& v : p) v += g(rng);
    }
    return out;
}

}  // namespace odrift::testing
