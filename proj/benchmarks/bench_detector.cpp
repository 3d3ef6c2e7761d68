#include "odrift/detector.hpp"
#include "odrift/geometry.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace odrift;

namespace {

std::vector<geometry::LatentVector> gaussian_points(std::size_t n, std::size_t dim, double offset, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<geometry::LatentVector> pts(n, geometry::LatentVector(dim));
    for (auto& p : pts) {
        for (auto& v : p) v = offset + g(rng);
    }
    return pts;
}

void BM_Observe(benchmark::State& state) {
    const std::size_t dim = 16;
    const auto pts = gaussian_points(8192, dim, 0.0, 11);
    detector::Detector det({}, dim);
    std::uint64_t i = 0;
    // Warm up so the measured path is the steady state with one permanent cluster.
    for (; i < 2000; ++i) det.observe(i, pts[i % pts.size()]);
    for (auto _ : state) {
        benchmark::DoNotOptimize(det.observe(i, pts[i % pts.size()]));
        ++i;
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Observe);

void BM_DeltaBand(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::uint64_t> u(0, 100);
    std::vector<std::uint64_t> bins(static_cast<std::size_t>(state.range(0)));
    for (auto& b : bins) b = u(rng);
    const auto hist = geometry::DistanceHistogram::from_counts(bins);
    for (auto _ : state) benchmark::DoNotOptimize(geometry::compute_delta_band(hist, 0.75));
}
BENCHMARK(BM_DeltaBand)->Arg(64)->Arg(1024);

void BM_KlDivergence(benchmark::State& state) {
    std::vector<double> p(64, 1.0 / 64.0), q(64);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = (i % 2 ? 1.5 : 0.5) / 64.0;
    for (auto _ : state) benchmark::DoNotOptimize(geometry::kl_divergence(p, q));
}
BENCHMARK(BM_KlDivergence);

}  // namespace
