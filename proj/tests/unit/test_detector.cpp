#include "odrift/detector.hpp"
#include "odrift/error.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace odrift;
using namespace odrift::detector;

namespace {

struct Feed {
    std::vector<DriftEvent> drifts;
    std::vector<Assignment> assignments;
};

Feed feed(Detector& det, const std::vector<geometry::LatentVector>& pts, std::uint64_t first_index = 0) {
    Feed f;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto obs = det.observe(first_index + i, pts[i]);
        f.assignments.push_back(obs.assignment);
        if (obs.drift) f.drifts.push_back(*obs.drift);
    }
    return f;
}

std::vector<double> center(std::size_t dim, std::size_t axis, double offset) {
    std::vector<double> c(dim, 0.0);
    c[axis] = offset;
    return c;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("params validation") {
    DetectorParams p;
    CHECK_NOTHROW(p.validate());
    p.delta = 1.0;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
    p = {};
    p.stable_window = 0;
    CHECK_THROWS_AS(p.validate(), PreconditionError);
    CHECK_THROWS_AS(Detector(DetectorParams{}, 0), PreconditionError);
}

TEST_CASE("no promotion before min_temp_size") {
    nn::Rng rng(1);
    DetectorParams p;
    p.stable_window = 1;
    Detector det(p, 4);
    const auto pts = testing::blob(p.min_temp_size - 1, std::vector<double>(4, 0.0), 1.0, rng);
    const auto f = feed(det, pts);
    CHECK(f.drifts.empty());
    CHECK(det.temporary().member_count() == p.min_temp_size - 1);
    CHECK(det.permanents().empty());
}

TEST_CASE("identical prior and posterior become stable") {
    DetectorParams p;
    Cluster c;
    c.geometry.count = p.min_temp_size;
    c.prior_pmf = {0.25, 0.5, 0.25};
    c.posterior_pmf = c.prior_pmf;
    for (std::size_t i = 0; i < p.stable_window; ++i) {
        CHECK_FALSE(stability_test(c, p));
        record_stability_step(c, p);
        CHECK(c.last_kl == 0.0);
    }
    CHECK(stability_test(c, p));
}

TEST_CASE("flipping modal bin never stabilizes") {
    DetectorParams p;
    Cluster c;
    c.geometry.count = p.min_temp_size;
    for (std::size_t i = 0; i < 10 * p.stable_window; ++i) {
        c.prior_pmf = (i % 2) ? std::vector<double>{0.8, 0.2} : std::vector<double>{0.2, 0.8};
        c.posterior_pmf = (i % 2) ? std::vector<double>{0.2, 0.8} : std::vector<double>{0.8, 0.2};
        record_stability_step(c, p);
        CHECK(c.stable_streak == 0);
        CHECK_FALSE(stability_test(c, p));
    }
}

TEST_CASE("gaussian stream stabilizes and promotes") {
    nn::Rng rng(3);
    Detector det(DetectorParams{}, 16);
    const auto pts = testing::blob(5000, std::vector<double>(16, 0.0), 1.0, rng);
    std::size_t first = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (det.observe(i, pts[i]).drift) {
            first = i + 1;
            break;
        }
    }
    REQUIRE(first > 0);
    CHECK(first < 5000);
    CHECK(first >= DetectorParams{}.min_temp_size);
}

TEST_CASE("promotion contract") {
    nn::Rng rng(4);
    DetectorParams p;
    Detector det(p, 8);
    const auto pts = testing::blob(3000, std::vector<double>(8, 0.0), 1.0, rng);
    std::optional<DriftEvent> ev;
    std::uint64_t temp_size = 0;
    for (std::size_t i = 0; i < pts.size() && !ev; ++i) {
        temp_size = det.temporary().member_count() + 1;
        ev = det.observe(i, pts[i]).drift;
    }
    REQUIRE(ev);
    CHECK(det.permanents().size() == 1);
    CHECK(det.temporary().member_count() == 0);
    CHECK(det.temporary().members.empty());
    CHECK(ev->member_count == temp_size);
    CHECK(ev->member_samples.size() == temp_size);

    // The band satisfies the mass constraint on the members' own distances.
    const auto& c = det.permanents().front();
    geometry::DistanceHistogram h(p.bin_count);
    for (const auto& m : c.members) h.add(geometry::normalized_distance(m, c.geometry));
    CHECK(h.bins() == c.geometry.histogram.bins());
    const auto oracle = testing::band_oracle(h.bins(), p.delta);
    CHECK(c.geometry.band.first_bin == oracle.first);
    CHECK(c.geometry.band.last_bin == oracle.second);
    CHECK(c.geometry.band.achieved_mass >= p.delta);
}

TEST_CASE("promote on an unstable temporary cluster is a state error") {
    Detector det(DetectorParams{}, 2);
    det.observe(0, std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(det.promote(1), StateError);
}

TEST_CASE("two separated blobs give two promotions in order") {
    nn::Rng rng(5);
    const std::size_t dim = 8;
    Detector det(DetectorParams{}, dim);
    auto a = testing::blob(5000, center(dim, 0, 0.0), 1.0, rng);
    auto b = testing::blob(5000, center(dim, 0, 12.0), 1.0, rng);
    const auto fa = feed(det, a);
    const auto fb = feed(det, b, 5000);
    REQUIRE(fa.drifts.size() == 1);
    REQUIRE(fb.drifts.size() == 1);
    CHECK(fa.drifts[0].cluster_id < fb.drifts[0].cluster_id);
    CHECK(fb.drifts[0].sample_index >= 5000);
    // No B point lands in A's cluster.
    for (const auto& as : fb.assignments) {
        for (auto id : as.clusters) CHECK(id == fb.drifts[0].cluster_id);
    }
}

TEST_CASE("a point at the centroid of a band starting at zero is not a member") {
    nn::Rng rng(6);
    Detector det(DetectorParams{}, 1);
    const auto pts = testing::blob(4000, {0.0}, 1.0, rng);
    feed(det, pts);
    REQUIRE(det.permanents().size() == 1);
    const auto& c = det.permanents().front();
    REQUIRE(c.geometry.band.lower == 0.0);
    const auto obs = det.observe(9999, c.geometry.centroid);
    CHECK(obs.assignment.temporary);
    CHECK(obs.assignment.clusters.empty());
}

TEST_CASE("assignments follow the band test") {
    nn::Rng rng(8);
    Detector det(DetectorParams{}, 4);
    feed(det, testing::blob(2000, std::vector<double>(4, 0.0), 1.0, rng));
    REQUIRE(det.permanents().size() == 1);
    for (const auto& z : testing::blob(200, std::vector<double>(4, 0.0), 2.0, rng)) {
        const auto& c = det.permanents().front();
        const bool inside = geometry::band_contains(c.geometry.band, geometry::normalized_distance(z, c.geometry));
        const auto obs = det.observe(5000, z);
        CHECK(obs.assignment.temporary != inside);
    }
}

TEST_CASE("wrong latent dimension is structural") {
    Detector det(DetectorParams{}, 3);
    CHECK_THROWS_AS(det.observe(0, std::vector<double>{1.0}), StructuralError);
}

TEST_CASE("empty detector snapshot round-trip") {
    Detector det(DetectorParams{}, 5);
    const auto bytes = det.snapshot();
    const auto back = Detector::restore(bytes);
    CHECK(back.permanents().empty());
    CHECK(back.temporary().member_count() == 0);
    CHECK(back.latent_dim() == 5);
    CHECK(back.params() == det.params());
    CHECK(back.snapshot() == bytes);
}

TEST_CASE("snapshot with three clusters replays identically") {
    nn::Rng rng(9);
    const std::size_t dim = 6;
    Detector det(DetectorParams{}, dim);
    std::uint64_t idx = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        feed(det, testing::blob(1500, center(dim, k, 15.0), 1.0, rng), idx);
        idx += 1500;
    }
    REQUIRE(det.permanents().size() == 3);
    const auto bytes = det.snapshot();
    auto restored = Detector::restore(bytes);
    CHECK(restored.snapshot() == bytes);

    std::vector<geometry::LatentVector> replay;
    for (std::size_t k = 0; k < 3; ++k) {
        auto part = testing::blob(34, center(dim, k, 15.0), 1.3, rng);
        replay.insert(replay.end(), part.begin(), part.end());
    }
    replay.resize(100);
    const auto a = feed(det, replay, idx);
    const auto b = feed(restored, replay, idx);
    for (std::size_t i = 0; i < replay.size(); ++i) {
        CHECK(a.assignments[i].clusters == b.assignments[i].clusters);
        CHECK(a.assignments[i].temporary == b.assignments[i].temporary);
    }
    CHECK(det.snapshot() == restored.snapshot());
}

TEST_CASE("truncated or corrupted snapshots are format errors") {
    nn::Rng rng(10);
    Detector det(DetectorParams{}, 3);
    feed(det, testing::blob(600, std::vector<double>(3, 0.0), 1.0, rng));
    const auto bytes = det.snapshot();
    for (std::size_t cut : {std::size_t{0}, std::size_t{4}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_THROWS_AS(Detector::restore(std::span(bytes.data(), cut)), FormatError);
    }
    auto bad = bytes;
    bad[4] = 99;  // version
    CHECK_THROWS_AS(Detector::restore(bad), FormatError);
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(Detector::restore(extra), FormatError);
}

}  // TEST_SUITE
