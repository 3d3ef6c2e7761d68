#include "odrift/scenario.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace odrift::scenario {

namespace {

std::vector<double> random_unit(std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double s = 0.0;
    for (auto& x : v) {
        x = n(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (auto& x : v) x /= s;
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void ScenarioSpec::validate() const {
    if (dim == 0 || source_count == 0 || total == 0) throw ConfigError("scenario sizes must be positive");
    if (!(sigma > 0.0) || !(separation > 0.0)) throw ConfigError("sigma and separation must be positive");
    if (source_count > dim) throw ConfigError("source count may not exceed the dimension");
    if (class_count < 1 || class_count > 4) throw ConfigError("classes must lie in [1,4]");
    if (stages.empty() || stages.front().start != 0) throw ConfigError("first stage must start at 0");
    std::vector<bool> seen(source_count, false);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i > 0 && stages[i].start <= stages[i - 1].start) throw ConfigError("stage starts must increase strictly");
        if (stages[i].sources.empty()) throw ConfigError("stage admits no source");
        for (auto s : stages[i].sources) {
            if (s >= source_count || seen[s]) throw ConfigError("stage source out of range or repeated");
            seen[s] = true;
        }
    }
}

ScenarioSpec ScenarioSpec::from_config(const config::Config& cfg) {
    ScenarioSpec s;
    s.dim = cfg.get_uint("dim", s.dim);
    s.source_count = cfg.get_uint("sources", s.source_count);
    s.separation = cfg.get_double("separation", s.separation);
    s.sigma = cfg.get_double("sigma", s.sigma);
    s.total = cfg.get_uint("total", s.total);
    s.class_count = cfg.get_uint("classes", s.class_count);
    s.label_delay = cfg.get_uint("label_delay", s.label_delay);
    s.seed = cfg.get_uint("seed", s.seed);
    if (cfg.has("stages")) {
        const auto starts = cfg.get_uint_list("stages", {});
        s.stages.clear();
        for (std::size_t i = 0; i < starts.size(); ++i) s.stages.push_back({starts[i], {i}});
    } else if (cfg.has("sources")) {
        s.stages.resize(std::min(s.stages.size(), s.source_count));
    }
    s.validate();
    return s;
}

Scenario::Scenario(ScenarioSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::mt19937_64 rng(spec_.seed);
    // Orthonormal offsets give every pair of means the same distance.
    std::vector<std::vector<double>> basis;
    while (basis.size() < spec_.source_count) {
        auto v = random_unit(spec_.dim, rng);
        for (const auto& b : basis) {
            const double p = dot(v, b);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
        }
        const double n = std::sqrt(dot(v, v));
        if (n < 1e-6) continue;
        for (auto& x : v) x /= n;
        basis.push_back(std::move(v));
    }
    const double offset = spec_.separation * spec_.sigma / std::sqrt(2.0);
    for (std::size_t s = 0; s < spec_.source_count; ++s) {
        Source src;
        src.mean.assign(spec_.dim, 0.5);
        for (std::size_t i = 0; i < spec_.dim; ++i) src.mean[i] += offset * basis[s][i];
        src.u1 = random_unit(spec_.dim, rng);
        src.u2 = random_unit(spec_.dim, rng);
        src.class_map.resize(4);
        std::iota(src.class_map.begin(), src.class_map.end(), std::size_t{0});
        std::shuffle(src.class_map.begin(), src.class_map.end(), rng);
        for (auto& c : src.class_map) c %= spec_.class_count;
        sources_.push_back(std::move(src));
    }
}

std::size_t Scenario::label_of(std::size_t source, const std::vector<double>& x) const {
    const auto& s = sources_.at(source);
    double a = 0.0;
    double b = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        a += s.u1[i] * (x[i] - s.mean[i]);
        b += s.u2[i] * (x[i] - s.mean[i]);
    }
    return s.class_map[(a > 0.0 ? 2 : 0) + (b > 0.0 ? 1 : 0)];
}

template <class Rng>
StreamItem Scenario::sample(std::size_t source, std::uint64_t index, Rng& rng) const {
    std::normal_distribution<double> n(0.0, spec_.sigma);
    StreamItem it;
    it.index = index;
    it.source = source;
    it.x.resize(spec_.dim);
    for (std::size_t i = 0; i < spec_.dim; ++i) it.x[i] = std::clamp(sources_[source].mean[i] + n(rng), 0.0, 1.0);
    it.label = label_of(source, it.x);
    it.available_at = index + spec_.label_delay;
    return it;
}

std::size_t Scenario::stage_of(std::uint64_t index) const {
    std::size_t s = 0;
    while (s + 1 < spec_.stages.size() && spec_.stages[s + 1].start <= index) ++s;
    return s;
}

std::vector<std::size_t> Scenario::pool_at(std::uint64_t index) const {
    std::vector<std::size_t> pool;
    for (std::size_t s = 0; s <= stage_of(index); ++s) {
        pool.insert(pool.end(), spec_.stages[s].sources.begin(), spec_.stages[s].sources.end());
    }
    return pool;
}

std::vector<StreamItem> Scenario::generate() const {
    std::mt19937_64 rng(spec_.seed ^ 0x5DEECE66DULL);
    std::vector<StreamItem> items;
    items.reserve(spec_.total);
    std::vector<std::size_t> pool;
    std::size_t stage = 0;
    pool = spec_.stages[0].sources;
    for (std::uint64_t i = 0; i < spec_.total; ++i) {
        while (stage + 1 < spec_.stages.size() && spec_.stages[stage + 1].start <= i) {
            ++stage;
            pool.insert(pool.end(), spec_.stages[stage].sources.begin(), spec_.stages[stage].sources.end());
        }
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        items.push_back(sample(pool[pick(rng)], i, rng));
    }
    return items;
}

std::vector<StreamItem> Scenario::draw(std::size_t source, std::size_t n, std::uint64_t seed) const {
    if (source >= sources_.size()) throw PreconditionError("unknown source");
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + source);
    std::vector<StreamItem> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) items.push_back(sample(source, i, rng));
    return items;
}

}  // namespace odrift::scenario
