#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Latent-space statistics: centroids, the normalized distance, histogram
// density of distances, density bands and KL divergence.
namespace odrift::geometry {

using LatentVector = std::vector<double>;

inline constexpr std::size_t kDefaultBinCount = 64;
inline constexpr double kKlSmoothing = 1e-6;
inline constexpr double kRadiusQuantile = 0.99;
// Lower bound for the radius scale; keeps d finite for degenerate clusters.
inline constexpr double kMinRadius = 1e-12;

// Counts of normalized distances over [0,1] with uniform bins. Values at
// exactly 1 land in the last bin.
class DistanceHistogram {
public:
    explicit DistanceHistogram(std::size_t bin_count = kDefaultBinCount);
    static DistanceHistogram from_counts(std::vector<std::uint64_t> bins);

    void add(double d);
    void clear();

    std::size_t bin_of(double d) const;
    std::size_t bin_count() const noexcept { return bins_.size(); }
    const std::vector<std::uint64_t>& bins() const noexcept { return bins_; }
    std::uint64_t total() const noexcept { return total_; }
    double bin_lower(std::size_t i) const;
    double bin_upper(std::size_t i) const;

    // Lowest-index bin holding the maximum count.
    std::size_t peak_bin() const;
    std::vector<double> pmf() const;

    friend bool operator==(const DistanceHistogram&, const DistanceHistogram&) = default;

private:
    std::vector<std::uint64_t> bins_;
    std::uint64_t total_ = 0;
};

// [lower, upper] in normalized-distance units; first_bin..last_bin are the
// inclusive histogram bins it spans.
struct DeltaBand {
    double delta = 0.0;
    double lower = 0.0;
    double upper = 1.0;
    double achieved_mass = 0.0;
    std::size_t first_bin = 0;
    std::size_t last_bin = 0;

    friend bool operator==(const DeltaBand&, const DeltaBand&) = default;
};

struct ClusterGeometry {
    LatentVector centroid;
    std::uint64_t count = 0;
    double radius_scale = 1.0;
    DistanceHistogram histogram;
    DeltaBand band;
};

LatentVector centroid(std::span<const LatentVector> points);
// Running-mean step: c <- c + (x - c) / new_count.
void update_centroid(LatentVector& c, std::span<const double> x, std::uint64_t new_count);

double l2_distance(std::span<const double> a, std::span<const double> b);
double normalized_distance(std::span<const double> z, std::span<const double> centroid, double radius_scale);
double normalized_distance(std::span<const double> z, const ClusterGeometry& geom);

// Linear-interpolated quantile (q in [0,1]); reorders `values`.
double quantile(std::vector<double>& values, double q);

// Minimal contiguous run of bins that contains the peak bin and holds at
// least `delta` of the mass. Ties on width go to the smaller lower edge.
DeltaBand compute_delta_band(const DistanceHistogram& hist, double delta);

// Strict on both sides: lower < d < upper.
bool band_contains(const DeltaBand& band, double d);

// KL(P_A || P_B) in nats after add-kKlSmoothing smoothing of both inputs.
double kl_divergence(std::span<const double> prior, std::span<const double> posterior);

// Histogram mass inside the band's bins, renormalized; all zeros when the
// band holds no mass.
std::vector<double> band_restricted_pmf(const DistanceHistogram& hist, const DeltaBand& band);

// Recomputes radius (q99 distance), histogram and band of `geom` around its
// current centroid from the given member set.
void rebuild_geometry(ClusterGeometry& geom, std::span<const LatentVector> members, double delta);

}  // namespace odrift::geometry
