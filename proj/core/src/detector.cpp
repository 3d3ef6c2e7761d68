#include "odrift/detector.hpp"

#include "odrift/binary_io.hpp"
#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace odrift::detector {

namespace {

constexpr std::uint32_t kSnapshotVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stateless reservoir slot for the m-th insertion into cluster `id`; keeps
// snapshots free of RNG state.
std::uint64_t reservoir_slot(std::uint64_t id, std::uint64_t m) {
    return splitmix64(id * 0x2545F4914F6CDD1DULL ^ m) % m;
}

void write_band(io::ByteWriter& w, const geometry::DeltaBand& b) {
    w.f64(b.delta);
    w.f64(b.lower);
    w.f64(b.upper);
    w.f64(b.achieved_mass);
    w.u64(b.first_bin);
    w.u64(b.last_bin);
}

geometry::DeltaBand read_band(io::ByteReader& r) {
    geometry::DeltaBand b;
    b.delta = r.f64();
    b.lower = r.f64();
    b.upper = r.f64();
    b.achieved_mass = r.f64();
    b.first_bin = r.u64();
    b.last_bin = r.u64();
    return b;
}

void write_doubles(io::ByteWriter& w, std::span<const double> v) {
    w.u64(v.size());
    for (double x : v) w.f64(x);
}

std::vector<double> read_doubles(io::ByteReader& r) {
    const auto n = r.count(8);
    std::vector<double> v(n);
    for (auto& x : v) x = r.f64();
    return v;
}

}  // namespace

void DetectorParams::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0,1)");
    if (!(kl_epsilon > 0.0)) throw PreconditionError("kl_epsilon must be positive");
    if (!(screen_margin > 0.0)) throw PreconditionError("screen_margin must be positive");
    if (stable_window == 0 || min_temp_size == 0 || bin_count == 0 || refresh_interval == 0 ||
        reservoir_capacity == 0) {
        throw PreconditionError("detector counts must be positive");
    }
}

void record_stability_step(Cluster& temp, const DetectorParams& params) {
    const bool usable = !temp.prior_pmf.empty() && temp.prior_pmf.size() == temp.posterior_pmf.size() &&
                        std::any_of(temp.prior_pmf.begin(), temp.prior_pmf.end(), [](double v) { return v > 0; }) &&
                        std::any_of(temp.posterior_pmf.begin(), temp.posterior_pmf.end(), [](double v) { return v > 0; });
    if (!usable) {
        temp.last_kl = std::numeric_limits<double>::infinity();
        temp.stable_streak = 0;
        return;
    }
    temp.last_kl = geometry::kl_divergence(temp.prior_pmf, temp.posterior_pmf);
    temp.stable_streak = temp.last_kl < params.kl_epsilon ? temp.stable_streak + 1 : 0;
}

bool stability_test(const Cluster& temp, const DetectorParams& params) {
    return temp.status == ClusterStatus::temporary && temp.member_count() >= params.min_temp_size &&
           temp.stable_streak >= params.stable_window;
}

Detector::Detector(DetectorParams params, std::size_t latent_dim) : params_(params), latent_dim_(latent_dim) {
    params_.validate();
    if (latent_dim_ == 0) throw PreconditionError("latent dimension must be positive");
    temporary_ = make_temporary();
}

Cluster Detector::make_temporary() const {
    Cluster c;
    c.id = 0;
    c.status = ClusterStatus::temporary;
    c.geometry.centroid.assign(latent_dim_, 0.0);
    c.geometry.histogram = geometry::DistanceHistogram(params_.bin_count);
    c.geometry.band.delta = params_.delta;
    return c;
}

const Cluster* Detector::find(std::uint64_t cluster_id) const {
    for (const auto& c : permanents_) {
        if (c.id == cluster_id) return &c;
    }
    return nullptr;
}

Observation Detector::observe(std::uint64_t sample_index, std::span<const double> z) {
    if (z.size() != latent_dim_) {
        throw StructuralError("observe: latent dimension " + std::to_string(z.size()) + " != " +
                              std::to_string(latent_dim_));
    }
    Observation obs;
    obs.assignment.sample_index = sample_index;

    std::vector<std::size_t> matched;
    for (std::size_t i = 0; i < permanents_.size(); ++i) {
        const double d = geometry::normalized_distance(z, permanents_[i].geometry);
        if (geometry::band_contains(permanents_[i].geometry.band, d)) matched.push_back(i);
    }

    if (!matched.empty()) {
        for (auto i : matched) {
            insert_permanent(permanents_[i], sample_index, z);
            obs.assignment.clusters.push_back(permanents_[i].id);
        }
        return obs;
    }

    obs.assignment.temporary = true;
    insert_temporary(sample_index, z);
    if (stability_test(temporary_, params_)) {
        if (!permanents_.empty()) obs.screening = screen_temporary();
        if (stability_test(temporary_, params_)) obs.drift = promote(sample_index);
    }
    return obs;
}

void Detector::insert_permanent(Cluster& c, std::uint64_t sample_index, std::span<const double> z) {
    auto& g = c.geometry;
    ++g.count;
    geometry::update_centroid(g.centroid, z, g.count);

    if (c.members.size() < params_.reservoir_capacity) {
        c.members.emplace_back(z.begin(), z.end());
        c.member_samples.push_back(sample_index);
    } else {
        const auto slot = reservoir_slot(c.id, g.count);
        if (slot < c.members.size()) {
            c.members[slot].assign(z.begin(), z.end());
            c.member_samples[slot] = sample_index;
        }
    }

    if (++c.inserts_since_refresh >= params_.refresh_interval) {
        geometry::rebuild_geometry(g, c.members, params_.delta);
        c.inserts_since_refresh = 0;
    } else {
        g.histogram.add(geometry::normalized_distance(z, g));
        g.band = geometry::compute_delta_band(g.histogram, params_.delta);
    }
}

void Detector::insert_temporary(std::uint64_t sample_index, std::span<const double> z) {
    auto& t = temporary_;
    t.members.emplace_back(z.begin(), z.end());
    t.member_samples.push_back(sample_index);
    ++t.geometry.count;
    geometry::update_centroid(t.geometry.centroid, z, t.geometry.count);
    geometry::rebuild_geometry(t.geometry, t.members, params_.delta);

    // Prior and posterior share the updated centroid and radius, so the
    // divergence reflects the added point rather than a rescaled histogram.
    auto counts = t.geometry.histogram.bins();
    --counts[t.geometry.histogram.bin_of(geometry::normalized_distance(z, t.geometry))];
    const auto before = geometry::DistanceHistogram::from_counts(std::move(counts));
    t.prior_pmf = geometry::band_restricted_pmf(before, t.geometry.band);
    t.posterior_pmf = geometry::band_restricted_pmf(t.geometry.histogram, t.geometry.band);

    if (t.geometry.count >= params_.min_temp_size) {
        record_stability_step(t, params_);
    } else {
        t.stable_streak = 0;
        t.last_kl = std::numeric_limits<double>::infinity();
    }
}

ScreeningResult Detector::screen_temporary() {
    ScreeningResult result;
    auto& t = temporary_;
    std::vector<std::size_t> owner(t.members.size(), permanents_.size());
    std::size_t absorbed = 0;
    for (std::size_t i = 0; i < t.members.size(); ++i) {
        double best = params_.screen_margin;
        for (std::size_t p = 0; p < permanents_.size(); ++p) {
            const auto& g = permanents_[p].geometry;
            const double r = geometry::l2_distance(t.members[i], g.centroid) / g.radius_scale;
            if (r < best) {
                best = r;
                owner[i] = p;
            }
        }
        absorbed += owner[i] < permanents_.size();
    }
    if (absorbed == 0) return result;

    std::vector<LatentVector> kept;
    std::vector<std::uint64_t> kept_samples;
    for (std::size_t i = 0; i < t.members.size(); ++i) {
        if (owner[i] < permanents_.size()) {
            auto& c = permanents_[owner[i]];
            insert_permanent(c, t.member_samples[i], t.members[i]);
            result.absorbed.emplace_back(t.member_samples[i], c.id);
        } else {
            kept.push_back(std::move(t.members[i]));
            kept_samples.push_back(t.member_samples[i]);
        }
    }

    auto inside_known = [this](std::span<const double> z) {
        for (const auto& p : permanents_) {
            if (geometry::l2_distance(z, p.geometry.centroid) < p.geometry.radius_scale) return true;
        }
        return false;
    };
    if (kept.empty() || inside_known(geometry::centroid(kept))) {
        result.dropped = kept.size();
        result.cleared = true;
        temporary_ = make_temporary();
        return result;
    }

    const auto streak = t.stable_streak;
    t.geometry.centroid = geometry::centroid(kept);
    t.geometry.count = kept.size();
    t.members = std::move(kept);
    t.member_samples = std::move(kept_samples);
    geometry::rebuild_geometry(t.geometry, t.members, params_.delta);
    if (t.geometry.count < params_.min_temp_size) {
        t.stable_streak = 0;
        t.last_kl = std::numeric_limits<double>::infinity();
        t.prior_pmf.clear();
        t.posterior_pmf.clear();
    } else {
        t.stable_streak = streak;
    }
    return result;
}

DriftEvent Detector::promote(std::uint64_t sample_index) {
    if (!stability_test(temporary_, params_)) throw StateError("promote: temporary cluster is not stable");

    Cluster c = std::move(temporary_);
    temporary_ = make_temporary();

    c.id = next_id_++;
    c.status = ClusterStatus::permanent;
    c.geometry.centroid = geometry::centroid(c.members);
    geometry::rebuild_geometry(c.geometry, c.members, params_.delta);
    c.promoted_at = sample_index;
    c.promoted_size = c.geometry.count;
    c.inserts_since_refresh = 0;

    DriftEvent ev;
    ev.cluster_id = c.id;
    ev.sample_index = sample_index;
    ev.member_count = c.geometry.count;
    ev.band = c.geometry.band;
    ev.member_samples = c.member_samples;

    // Thin the retained members down to the reservoir size, deterministically.
    if (c.members.size() > params_.reservoir_capacity) {
        std::vector<LatentVector> members;
        std::vector<std::uint64_t> samples;
        const std::size_t n = c.members.size();
        for (std::size_t k = 0; k < params_.reservoir_capacity; ++k) {
            const std::size_t i = k * n / params_.reservoir_capacity;
            members.push_back(std::move(c.members[i]));
            samples.push_back(c.member_samples[i]);
        }
        c.members = std::move(members);
        c.member_samples = std::move(samples);
    }

    permanents_.push_back(std::move(c));
    check_invariants();
    return ev;
}

void Detector::check_invariants() const {
    if (temporary_.status != ClusterStatus::temporary) throw StateError("temporary cluster lost its status");
    for (const auto& p : permanents_) {
        if (p.status != ClusterStatus::permanent || p.id == 0) throw StateError("malformed permanent cluster");
    }
}

std::vector<std::uint8_t> Detector::snapshot() const {
    io::ByteWriter w;
    w.magic("ODRG");
    w.u32(kSnapshotVersion);
    w.f64(params_.delta);
    w.f64(params_.kl_epsilon);
    w.u64(params_.stable_window);
    w.u64(params_.min_temp_size);
    w.u64(params_.bin_count);
    w.u64(params_.refresh_interval);
    w.u64(params_.reservoir_capacity);
    w.f64(params_.screen_margin);
    w.u64(latent_dim_);
    w.u64(next_id_);
    w.u64(permanents_.size() + 1);

    auto write_cluster = [&](const Cluster& c) {
        w.u64(c.id);
        w.u8(static_cast<std::uint8_t>(c.status));
        w.u64(c.geometry.count);
        for (double v : c.geometry.centroid) w.f64(v);
        w.f64(c.geometry.radius_scale);
        for (auto b : c.geometry.histogram.bins()) w.u64(b);
        w.u64(c.geometry.histogram.total());
        write_band(w, c.geometry.band);
        w.u64(c.stable_streak);
        w.f64(c.last_kl);
        w.u64(c.inserts_since_refresh);
        w.u64(c.promoted_at);
        w.u64(c.promoted_size);
        write_doubles(w, c.prior_pmf);
        write_doubles(w, c.posterior_pmf);
        w.u64(c.members.size());
        for (std::size_t i = 0; i < c.members.size(); ++i) {
            w.u64(c.member_samples[i]);
            for (double v : c.members[i]) w.f64(v);
        }
    };
    for (const auto& p : permanents_) write_cluster(p);
    write_cluster(temporary_);
    return w.take();
}

Detector Detector::restore(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("ODRG");
    const auto version = r.u32();
    if (version != kSnapshotVersion) throw FormatError("unsupported ODRG version " + std::to_string(version));

    DetectorParams params;
    params.delta = r.f64();
    params.kl_epsilon = r.f64();
    params.stable_window = r.u64();
    params.min_temp_size = r.u64();
    params.bin_count = r.u64();
    params.refresh_interval = r.u64();
    params.reservoir_capacity = r.u64();
    params.screen_margin = r.f64();
    const auto latent_dim = r.u64();
    try {
        params.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("invalid detector params: ") + e.what());
    }
    if (latent_dim == 0 || latent_dim > (1u << 20) || params.bin_count > (1u << 20)) {
        throw FormatError("implausible dimensions");
    }

    Detector d(params, latent_dim);
    d.next_id_ = r.u64();
    const auto cluster_count = r.count(8);
    if (cluster_count == 0) throw FormatError("snapshot lacks the temporary cluster");

    auto read_cluster = [&]() {
        Cluster c;
        c.id = r.u64();
        const auto status = r.u8();
        if (status > 1) throw FormatError("bad cluster status");
        c.status = static_cast<ClusterStatus>(status);
        c.geometry.count = r.u64();
        c.geometry.centroid.resize(latent_dim);
        for (auto& v : c.geometry.centroid) v = r.f64();
        c.geometry.radius_scale = r.f64();
        std::vector<std::uint64_t> bins(params.bin_count);
        for (auto& b : bins) b = r.u64();
        const auto total = r.u64();
        c.geometry.histogram = geometry::DistanceHistogram::from_counts(std::move(bins));
        if (c.geometry.histogram.total() != total) throw FormatError("histogram total mismatch");
        c.geometry.band = read_band(r);
        if (c.geometry.band.last_bin >= params.bin_count || c.geometry.band.first_bin > c.geometry.band.last_bin) {
            throw FormatError("band outside histogram");
        }
        c.stable_streak = r.u64();
        c.last_kl = r.f64();
        c.inserts_since_refresh = r.u64();
        c.promoted_at = r.u64();
        c.promoted_size = r.u64();
        c.prior_pmf = read_doubles(r);
        c.posterior_pmf = read_doubles(r);
        const auto members = r.count(8 * (latent_dim + 1));
        c.members.resize(members);
        c.member_samples.resize(members);
        for (std::size_t i = 0; i < members; ++i) {
            c.member_samples[i] = r.u64();
            c.members[i].resize(latent_dim);
            for (auto& v : c.members[i]) v = r.f64();
        }
        if (!(c.geometry.radius_scale > 0.0) || !std::isfinite(c.geometry.radius_scale)) {
            throw FormatError("non-positive radius scale");
        }
        return c;
    };

    for (std::uint64_t i = 0; i + 1 < cluster_count; ++i) {
        auto c = read_cluster();
        if (c.status != ClusterStatus::permanent) throw FormatError("expected permanent cluster record");
        d.permanents_.push_back(std::move(c));
    }
    auto t = read_cluster();
    if (t.status != ClusterStatus::temporary) throw FormatError("expected temporary cluster record");
    d.temporary_ = std::move(t);
    r.expect_end();
    d.check_invariants();
    return d;
}

}  // namespace odrift::detector
