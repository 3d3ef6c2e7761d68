#include "odrift/selector.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace odrift;

namespace {

std::vector<selector::Candidate> make_candidates(std::size_t n, std::size_t dim) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<selector::Candidate> out;
    for (std::size_t i = 0; i < n; ++i) {
        selector::Candidate c;
        c.model_id = i + 1;
        c.cluster_id = i + 1;
        c.centroid.resize(dim);
        for (auto& v : c.centroid) v = 4.0 * g(rng);
        c.radius_scale = 3.0;
        c.band.lower = 0.4;
        c.band.upper = 0.8;
        out.push_back(std::move(c));
    }
    return out;
}

void BM_Select(benchmark::State& state) {
    const auto policy = static_cast<selector::Policy>(state.range(0));
    const auto models = make_candidates(static_cast<std::size_t>(state.range(1)), 16);
    std::vector<double> z(16, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(selector::select(policy, z, models));
    state.SetLabel(std::string(selector::to_string(policy)));
}
BENCHMARK(BM_Select)->ArgsProduct({{0, 1, 2}, {4, 32}});

}  // namespace
