#include "odrift/geometry.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace odrift::geometry {

DistanceHistogram::DistanceHistogram(std::size_t bin_count) : bins_(bin_count, 0) {
    if (bin_count == 0) throw PreconditionError("histogram needs at least one bin");
}

DistanceHistogram DistanceHistogram::from_counts(std::vector<std::uint64_t> bins) {
    DistanceHistogram h(bins.size());
    h.total_ = std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
    h.bins_ = std::move(bins);
    return h;
}

std::size_t DistanceHistogram::bin_of(double d) const {
    if (!(d > 0.0)) return 0;  // also maps NaN to bin 0
    const auto n = bins_.size();
    const auto idx = static_cast<std::size_t>(d * static_cast<double>(n));
    return std::min(idx, n - 1);
}

void DistanceHistogram::add(double d) {
    ++bins_[bin_of(d)];
    ++total_;
}

void DistanceHistogram::clear() {
    std::fill(bins_.begin(), bins_.end(), 0);
    total_ = 0;
}

double DistanceHistogram::bin_lower(std::size_t i) const {
    return static_cast<double>(i) / static_cast<double>(bins_.size());
}

double DistanceHistogram::bin_upper(std::size_t i) const {
    return static_cast<double>(i + 1) / static_cast<double>(bins_.size());
}

std::size_t DistanceHistogram::peak_bin() const {
    return static_cast<std::size_t>(std::max_element(bins_.begin(), bins_.end()) - bins_.begin());
}

std::vector<double> DistanceHistogram::pmf() const {
    std::vector<double> p(bins_.size(), 0.0);
    if (total_ == 0) return p;
    const double t = static_cast<double>(total_);
    for (std::size_t i = 0; i < bins_.size(); ++i) p[i] = static_cast<double>(bins_[i]) / t;
    return p;
}

LatentVector centroid(std::span<const LatentVector> points) {
    if (points.empty()) throw PreconditionError("centroid of an empty point set");
    const std::size_t dim = points.front().size();
    LatentVector c(dim, 0.0);
    for (const auto& p : points) {
        if (p.size() != dim) throw StructuralError("centroid: mixed dimensions");
        for (std::size_t i = 0; i < dim; ++i) c[i] += p[i];
    }
    const double n = static_cast<double>(points.size());
    for (auto& v : c) v /= n;
    return c;
}

void update_centroid(LatentVector& c, std::span<const double> x, std::uint64_t new_count) {
    if (new_count == 0) throw PreconditionError("update_centroid: count must be positive");
    if (new_count == 1) {
        c.assign(x.begin(), x.end());
        return;
    }
    if (c.size() != x.size()) throw StructuralError("update_centroid: dimension mismatch");
    const double n = static_cast<double>(new_count);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += (x[i] - c[i]) / n;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw StructuralError("distance: dimension " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double normalized_distance(std::span<const double> z, std::span<const double> c, double radius_scale) {
    if (!(radius_scale > 0.0)) throw PreconditionError("radius scale must be positive");
    return std::min(1.0, l2_distance(z, c) / radius_scale);
}

double normalized_distance(std::span<const double> z, const ClusterGeometry& geom) {
    return normalized_distance(z, geom.centroid, geom.radius_scale);
}

double quantile(std::vector<double>& values, double q) {
    if (values.empty()) throw PreconditionError("quantile of an empty set");
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    if (frac == 0.0 || lo + 1 >= values.size()) return a;
    const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + frac * (b - a);
}

DeltaBand compute_delta_band(const DistanceHistogram& hist, double delta) {
    if (hist.total() == 0) throw PreconditionError("delta band of an empty histogram");
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0,1)");

    const auto& bins = hist.bins();
    const std::size_t n = bins.size();
    const double total = static_cast<double>(hist.total());
    std::vector<std::uint64_t> prefix(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + bins[i];
    auto mass = [&](std::size_t lo, std::size_t hi) {
        return static_cast<double>(prefix[hi + 1] - prefix[lo]) / total;
    };

    const std::size_t peak = hist.peak_bin();
    // Two pointers: as the lower edge walks down from the peak, the smallest
    // admissible upper edge can only move down as well.
    std::size_t best_lo = 0;
    std::size_t best_hi = n - 1;
    bool found = false;
    std::size_t hi = peak;
    for (std::size_t lo = peak + 1; lo-- > 0;) {
        while (hi + 1 < n && mass(lo, hi) < delta) ++hi;
        while (hi > peak && mass(lo, hi - 1) >= delta) --hi;
        if (mass(lo, hi) >= delta) {
            if (!found || hi - lo <= best_hi - best_lo) {
                best_lo = lo;
                best_hi = hi;
                found = true;
            }
        }
    }

    DeltaBand band;
    band.delta = delta;
    band.first_bin = best_lo;
    band.last_bin = best_hi;
    band.lower = hist.bin_lower(best_lo);
    band.upper = hist.bin_upper(best_hi);
    band.achieved_mass = mass(best_lo, best_hi);
    return band;
}

bool band_contains(const DeltaBand& band, double d) { return band.lower < d && d < band.upper; }

double kl_divergence(std::span<const double> prior, std::span<const double> posterior) {
    if (prior.size() != posterior.size()) throw StructuralError("kl_divergence: support size mismatch");
    if (prior.empty()) throw StructuralError("kl_divergence: empty support");
    const double sum_a = std::accumulate(prior.begin(), prior.end(), 0.0);
    const double sum_b = std::accumulate(posterior.begin(), posterior.end(), 0.0);
    if (std::abs(sum_a - 1.0) > 1e-9 || std::abs(sum_b - 1.0) > 1e-9) {
        throw PreconditionError("kl_divergence: inputs must be pmfs");
    }
    const double norm = 1.0 + kKlSmoothing * static_cast<double>(prior.size());
    double kl = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        const double a = (prior[i] + kKlSmoothing) / norm;
        const double b = (posterior[i] + kKlSmoothing) / norm;
        kl += a * std::log(a / b);
    }
    // Smoothed pmfs are strictly positive, so any negative value is rounding.
    return std::max(kl, 0.0);
}

std::vector<double> band_restricted_pmf(const DistanceHistogram& hist, const DeltaBand& band) {
    const auto& bins = hist.bins();
    if (band.last_bin >= bins.size() || band.first_bin > band.last_bin) {
        throw StructuralError("band does not fit histogram");
    }
    std::vector<double> p(bins.begin() + static_cast<std::ptrdiff_t>(band.first_bin),
                          bins.begin() + static_cast<std::ptrdiff_t>(band.last_bin) + 1);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    if (s > 0.0) {
        for (auto& v : p) v /= s;
    }
    return p;
}

void rebuild_geometry(ClusterGeometry& geom, std::span<const LatentVector> members, double delta) {
    if (members.empty()) throw PreconditionError("rebuild_geometry: no members");
    std::vector<double> dist;
    dist.reserve(members.size());
    for (const auto& m : members) dist.push_back(l2_distance(m, geom.centroid));
    std::vector<double> scratch = dist;
    geom.radius_scale = std::max(quantile(scratch, kRadiusQuantile), kMinRadius);
    geom.histogram.clear();
    for (double d : dist) geom.histogram.add(std::min(1.0, d / geom.radius_scale));
    geom.band = compute_delta_band(geom.histogram, delta);
}

}  // namespace odrift::geometry
