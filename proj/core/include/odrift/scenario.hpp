#pragma once

#include "odrift/config.hpp"
#include "odrift/stream_io.hpp"

#include <cstdint>
#include <vector>

// Staged synthetic drift: Gaussian sources admitted into a pool at stage
// boundaries; each item comes from a source drawn uniformly from the pool.
namespace odrift::scenario {

using stream::StreamItem;

struct Stage {
    std::uint64_t start = 0;
    std::vector<std::size_t> sources;  // admitted at `start`
};

struct ScenarioSpec {
    std::size_t dim = 16;
    std::size_t source_count = 4;
    // Pairwise distance between source means, in units of sigma.
    double separation = 8.0;
    double sigma = 0.03;
    std::vector<Stage> stages = {{0, {0}}, {2000, {1}}, {4000, {2}}, {6000, {3}}};
    std::uint64_t total = 10000;
    std::size_t class_count = 4;
    std::uint64_t label_delay = 500;
    std::uint64_t seed = 7;

    void validate() const;
    // Reads scenario keys (dim, sources, separation, sigma, stages, total,
    // classes, label_delay, seed) with these defaults as fallbacks.
    static ScenarioSpec from_config(const config::Config& cfg);
};

struct Source {
    std::vector<double> mean;
    // Two label directions and the permutation applied to the quadrant code.
    std::vector<double> u1;
    std::vector<double> u2;
    std::vector<std::size_t> class_map;
};

class Scenario {
public:
    explicit Scenario(ScenarioSpec spec);

    std::vector<StreamItem> generate() const;
    // Independent draws from one source (warm-up, held-out sets); indices 0..n-1.
    std::vector<StreamItem> draw(std::size_t source, std::size_t n, std::uint64_t seed) const;
    std::size_t label_of(std::size_t source, const std::vector<double>& x) const;

    const ScenarioSpec& spec() const noexcept { return spec_; }
    const std::vector<Source>& sources() const noexcept { return sources_; }
    // Index of the stage active at `index`.
    std::size_t stage_of(std::uint64_t index) const;
    std::vector<std::size_t> pool_at(std::uint64_t index) const;

private:
    template <class Rng>
    StreamItem sample(std::size_t source, std::uint64_t index, Rng& rng) const;

    ScenarioSpec spec_;
    std::vector<Source> sources_;
};

}  // namespace odrift::scenario
