#include "odrift/error.hpp"
#include "odrift/selector.hpp"
#include "odrift/task_model.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace odrift;
using namespace odrift::selector;

namespace {

// Classifier whose output ignores the input: fixed class probabilities.
task::Classifier constant_classifier(std::size_t input_dim, const std::vector<double>& probs) {
    nn::DenseLayer l;
    l.weights = nn::Matrix(probs.size(), input_dim);
    for (double p : probs) l.bias.push_back(std::log(p));
    l.activation = nn::Activation::identity;
    return task::Classifier(nn::Network({l}), probs.size());
}

// Candidates at 1-D positions; query at the origin.
std::vector<Candidate> line_candidates(const std::vector<double>& positions) {
    std::vector<Candidate> out;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        Candidate c;
        c.model_id = 100 + i;
        c.cluster_id = i + 1;
        c.centroid = {positions[i]};
        c.radius_scale = 10.0;
        c.band.lower = 0.0;
        c.band.upper = 0.05;  // nobody is inside unless a test says so
        out.push_back(c);
    }
    return out;
}

std::vector<nn::Vector> separable(std::size_t n, nn::Rng& rng, std::vector<std::size_t>& labels) {
    std::normal_distribution<double> g(0.0, 0.3);
    std::vector<nn::Vector> xs;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i % 2;
        xs.push_back({(y ? 1.5 : -1.5) + g(rng), g(rng), g(rng)});
        labels.push_back(y);
    }
    return xs;
}

}  // namespace

TEST_SUITE("task") {

TEST_CASE("argmax picks the lowest index among ties") {
    CHECK(task::argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
    CHECK(task::argmax(std::vector<double>{1.0}) == 0);
}

TEST_CASE("separable two-class data trains to high accuracy") {
    nn::Rng rng(1);
    std::vector<std::size_t> labels, test_labels;
    const auto xs = separable(400, rng, labels);
    const auto test = separable(200, rng, test_labels);
    auto clf = task::Classifier::make(3, std::vector<std::size_t>{8}, 2, 7);
    clf.train(xs, labels, task::TrainConfig{});
    CHECK(clf.accuracy(xs, labels) >= 0.95);
    CHECK(clf.accuracy(test, test_labels) >= 0.95);
    const auto p = clf.probabilities(xs[0]);
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
}

TEST_CASE("standardization is fixed by the first training call") {
    std::vector<nn::Vector> xs{{1.0, 10.0}, {3.0, 10.0}};
    std::vector<std::size_t> ys{0, 1};
    auto clf = task::Classifier::make(2, std::vector<std::size_t>{4}, 2, 1);
    CHECK(clf.shift().empty());
    clf.train(xs, ys, task::TrainConfig{});
    CHECK(clf.shift() == nn::Vector{2.0, 10.0});
    const auto z = clf.standardize(std::vector<double>{3.0, 10.0});
    CHECK(z[0] == doctest::Approx(1.0));
    CHECK(z[1] == 0.0);  // zero-variance feature stays finite
    const auto shift = clf.shift();
    clf.train(std::vector<nn::Vector>{{100.0, 0.0}}, std::vector<std::size_t>{0}, task::TrainConfig{});
    CHECK(clf.shift() == shift);
}

TEST_CASE("training input validation") {
    auto clf = task::Classifier::make(2, std::vector<std::size_t>{4}, 2, 1);
    CHECK_THROWS_AS(clf.train(std::vector<nn::Vector>{{1.0, 2.0}}, std::vector<std::size_t>{5}, task::TrainConfig{}),
                    Error);
    CHECK_THROWS_AS(clf.predict(std::vector<double>{1.0}), StructuralError);
}

}  // TEST_SUITE

TEST_SUITE("selector") {

TEST_CASE("policy names") {
    for (auto p : {Policy::knn_u, Policy::knn_w, Policy::delta_bm}) CHECK(parse_policy(to_string(p)) == p);
    CHECK_THROWS_AS(parse_policy("nearest"), ConfigError);
}

TEST_CASE("knn-u") {
    const auto models = line_candidates({1, 2, 4, 9});
    const std::vector<double> z{0.0};
    auto d = select_knn_u(z, models, 1);
    REQUIRE(d.entries.size() == 1);
    CHECK(d.entries[0] == std::pair<std::uint64_t, double>{100, 1.0});

    d = select_knn_u(z, models, 3);
    REQUIRE(d.entries.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(d.entries[i].first == 100 + i);
        CHECK(d.entries[i].second == 1.0 / 3.0);
    }
    d = select_knn_u(z, models, 10);
    CHECK(d.entries.size() == 4);
    for (const auto& e : d.entries) CHECK(e.second == 0.25);
}

TEST_CASE("knn-w weights") {
    const auto w = knn_weights(std::vector<double>{1, 2, 4});
    CHECK(w[0] == 4.0 / 7.0);
    CHECK(w[1] == 2.0 / 7.0);
    CHECK(w[2] == 1.0 / 7.0);
    for (double v : knn_weights(std::vector<double>{3, 3, 3, 3})) CHECK(v == 0.25);
    // A zero distance is floored rather than dividing by zero.
    const auto z = knn_weights(std::vector<double>{0.0, 1.0});
    CHECK(z[0] > 0.999999);

    const auto d = select_knn_w(std::vector<double>{0.0}, line_candidates({4, 1, 2, 9}), 3);
    REQUIRE(d.entries.size() == 3);
    CHECK(d.entries[0] == std::pair<std::uint64_t, double>{101, 4.0 / 7.0});
    CHECK(d.entries[1] == std::pair<std::uint64_t, double>{102, 2.0 / 7.0});
    CHECK(d.entries[2] == std::pair<std::uint64_t, double>{100, 1.0 / 7.0});
}

TEST_CASE("knn-w weights are scale invariant") {
    nn::Rng rng(12);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    std::uniform_int_distribution<int> e(-20, 20);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> d(5);
        for (auto& v : d) v = u(rng);
        const auto base = knn_weights(d);
        // Power-of-two scales are exact in binary floating point.
        auto scaled = d;
        const double c2 = std::ldexp(1.0, e(rng));
        for (auto& v : scaled) v *= c2;
        CHECK(knn_weights(scaled) == base);
        // Arbitrary scales agree to a few ulps.
        const double c = u(rng);
        for (std::size_t i = 0; i < d.size(); ++i) scaled[i] = d[i] * c;
        const auto w = knn_weights(scaled);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(w[i] - base[i]) <= 8 * std::numeric_limits<double>::epsilon());
    }
}

TEST_CASE("delta-bm") {
    auto models = line_candidates({1, 2, 4});
    const std::vector<double> z{0.0};
    // z sits at normalized distance 0.1 from the first model only.
    models[0].band.upper = 0.15;
    auto d = select_delta_bm(z, models, 3);
    CHECK_FALSE(d.fallback);
    REQUIRE(d.entries.size() == 1);
    CHECK(d.entries[0] == std::pair<std::uint64_t, double>{100, 1.0});

    models[1].band.upper = 0.25;
    d = select_delta_bm(z, models, 3);
    REQUIRE(d.entries.size() == 2);
    CHECK(d.entries[0].second == 0.5);
    CHECK(d.entries[1].second == 0.5);

    const auto outside = line_candidates({1, 2, 4});
    d = select_delta_bm(z, outside, 2);
    const auto w = select_knn_w(z, outside, 2);
    CHECK(d.fallback);
    CHECK(d.entries == w.entries);
}

TEST_CASE("selection over nothing is a state error") {
    const std::vector<Candidate> none;
    CHECK_THROWS_AS(select(Policy::knn_w, std::vector<double>{0.0}, none), StateError);
    CHECK_THROWS_AS(select(Policy::delta_bm, std::vector<double>{0.0}, none), StateError);
}

TEST_CASE("ensemble prediction") {
    std::map<std::uint64_t, task::Classifier> models;
    models.emplace(1, constant_classifier(2, {0.8, 0.2}));
    models.emplace(2, constant_classifier(2, {0.2, 0.8}));
    const ModelLookup lookup = [&](std::uint64_t id) -> const task::Classifier* {
        auto it = models.find(id);
        return it == models.end() ? nullptr : &it->second;
    };
    const std::vector<double> x{0.3, 0.3};

    SelectionDecision d;
    d.entries = {{1, 0.75}, {2, 0.25}};
    const auto p = ensemble_probabilities(d, x, lookup);
    CHECK(p[0] == doctest::Approx(0.65).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(ensemble_predict(d, x, lookup) == 0);

    d.entries = {{2, 1.0}};
    CHECK(ensemble_predict(d, x, lookup) == models.at(2).predict(x));

    models.emplace(3, constant_classifier(2, {0.2, 0.8}));
    d.entries = {{2, 0.9}, {3, 0.1}};
    CHECK(ensemble_predict(d, x, lookup) == 1);
    d.entries = {{2, 0.1}, {3, 0.9}};
    CHECK(ensemble_predict(d, x, lookup) == 1);

    d.entries = {{42, 1.0}};
    CHECK_THROWS_AS(ensemble_predict(d, x, lookup), StateError);
}

}  // TEST_SUITE
