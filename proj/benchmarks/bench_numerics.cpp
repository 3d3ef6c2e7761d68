#include "odrift/numerics.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace odrift;

namespace {

nn::Network make_net(std::size_t in, std::size_t hidden, std::size_t out, nn::Rng& rng) {
    return nn::Network::dense({in, hidden, out}, {nn::Activation::relu, nn::Activation::sigmoid}, rng);
}

nn::Vector random_input(std::size_t n, nn::Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nn::Vector v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void BM_Forward(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0));
    nn::Rng rng(1);
    auto net = make_net(in, 64, 16, rng);
    const auto x = random_input(in, rng);
    for (auto _ : state) benchmark::DoNotOptimize(net.infer(x));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(784);

void BM_ForwardBackward(benchmark::State& state) {
    const auto in = static_cast<std::size_t>(state.range(0));
    nn::Rng rng(2);
    auto net = make_net(in, 64, 16, rng);
    const auto x = random_input(in, rng);
    const nn::Vector g(16, 0.1);
    auto acc = nn::Gradients::zeros_like(net);
    for (auto _ : state) {
        net.forward(x);
        benchmark::DoNotOptimize(net.backward(g, acc, false));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(784);

void BM_AdamStep(benchmark::State& state) {
    nn::Rng rng(3);
    auto net = make_net(784, 256, 64, rng);
    nn::Optimizer opt(nn::OptimizerConfig{}, net);
    auto grads = nn::Gradients::zeros_like(net);
    for (auto _ : state) opt.step(net, grads);
}
BENCHMARK(BM_AdamStep);

}  // namespace
