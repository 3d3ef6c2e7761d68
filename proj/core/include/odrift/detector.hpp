#pragma once

#include "odrift/geometry.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

// Streaming cluster discovery over latent vectors. Points inside a permanent
// cluster's density band join it; everything else accumulates in the single
// temporary cluster, which is promoted once its band distribution stops
// moving between insertions.
namespace odrift::detector {

using geometry::LatentVector;

struct DetectorParams {
    double delta = 0.75;
    double kl_epsilon = 1e-3;
    std::size_t stable_window = 50;
    std::size_t min_temp_size = 100;
    std::size_t bin_count = geometry::kDefaultBinCount;
    // Permanent clusters re-derive radius and histogram from their retained
    // members every this many insertions.
    std::size_t refresh_interval = 32;
    // Members retained per permanent cluster (uniform reservoir).
    std::size_t reservoir_capacity = 4096;
    // Temporary members closer than this many radii to a permanent centroid
    // are handed to that cluster when the temporary cluster is screened.
    double screen_margin = 1.25;

    void validate() const;
    friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

enum class ClusterStatus : std::uint8_t { temporary = 0, permanent = 1 };

struct Cluster {
    std::uint64_t id = 0;
    ClusterStatus status = ClusterStatus::temporary;
    geometry::ClusterGeometry geometry;
    // Band-restricted pmfs before (prior) and after (posterior) the latest
    // insertion into the temporary cluster. Frozen at promotion.
    std::vector<double> prior_pmf;
    std::vector<double> posterior_pmf;
    std::uint64_t stable_streak = 0;
    double last_kl = std::numeric_limits<double>::infinity();
    std::uint64_t inserts_since_refresh = 0;
    std::uint64_t promoted_at = 0;
    std::uint64_t promoted_size = 0;
    // Sample indices and latents of retained members.
    std::vector<std::uint64_t> member_samples;
    std::vector<LatentVector> members;

    std::uint64_t member_count() const noexcept { return geometry.count; }
};

struct Assignment {
    std::uint64_t sample_index = 0;
    std::vector<std::uint64_t> clusters;  // permanent matches, ascending id
    bool temporary = false;
};

struct DriftEvent {
    std::uint64_t cluster_id = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t member_count = 0;
    geometry::DeltaBand band;
    std::vector<std::uint64_t> member_samples;
};

// Result of gating a stable temporary cluster before promotion.
struct ScreeningResult {
    // (sample index, cluster id) for members moved into permanent clusters.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> absorbed;
    std::uint64_t dropped = 0;  // survivors discarded with a cleared cluster
    bool cleared = false;       // survivors collapsed onto a known cluster
};

struct Observation {
    Assignment assignment;
    std::optional<DriftEvent> drift;
    std::optional<ScreeningResult> screening;
};

// Updates last_kl / stable_streak from the cluster's prior and posterior
// pmfs. Reads nothing but those two vectors and the streak.
void record_stability_step(Cluster& temp, const DetectorParams& params);

// True once the temporary cluster holds min_temp_size members and its KL
// has stayed below kl_epsilon for stable_window consecutive insertions.
bool stability_test(const Cluster& temp, const DetectorParams& params);

class Detector {
public:
    Detector(DetectorParams params, std::size_t latent_dim);

    Observation observe(std::uint64_t sample_index, std::span<const double> z);

    // Converts the temporary cluster into a permanent one. Throws StateError
    // when the temporary cluster is not stable.
    DriftEvent promote(std::uint64_t sample_index);

    const DetectorParams& params() const noexcept { return params_; }
    std::size_t latent_dim() const noexcept { return latent_dim_; }
    const std::vector<Cluster>& permanents() const noexcept { return permanents_; }
    const Cluster& temporary() const noexcept { return temporary_; }
    const Cluster* find(std::uint64_t cluster_id) const;
    std::uint64_t next_id() const noexcept { return next_id_; }

    std::vector<std::uint8_t> snapshot() const;
    static Detector restore(std::span<const std::uint8_t> bytes);

private:
    Cluster make_temporary() const;
    void insert_permanent(Cluster& c, std::uint64_t sample_index, std::span<const double> z);
    void insert_temporary(std::uint64_t sample_index, std::span<const double> z);
    ScreeningResult screen_temporary();
    void check_invariants() const;

    DetectorParams params_;
    std::size_t latent_dim_ = 0;
    std::vector<Cluster> permanents_;
    Cluster temporary_;
    std::uint64_t next_id_ = 1;
};

}  // namespace odrift::detector
