#include "odrift/selector.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace odrift::selector {

namespace {

struct Ranked {
    double distance;
    std::size_t index;
};

std::vector<Ranked> nearest(std::span<const double> z, std::span<const Candidate> models, std::size_t k) {
    if (models.empty()) throw StateError("selection over an empty model registry");
    if (k == 0) throw PreconditionError("k must be at least 1");
    std::vector<Ranked> r;
    r.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) r.push_back({geometry::l2_distance(z, models[i].centroid), i});
    std::stable_sort(r.begin(), r.end(), [](const Ranked& a, const Ranked& b) { return a.distance < b.distance; });
    r.resize(std::min(k, r.size()));
    return r;
}

}  // namespace

std::string_view to_string(Policy p) {
    switch (p) {
        case Policy::knn_u: return "knn-u";
        case Policy::knn_w: return "knn-w";
        case Policy::delta_bm: return "delta-bm";
    }
    return "?";
}

Policy parse_policy(std::string_view name) {
    if (name == "knn-u") return Policy::knn_u;
    if (name == "knn-w") return Policy::knn_w;
    if (name == "delta-bm") return Policy::delta_bm;
    throw ConfigError("unknown selection policy '" + std::string(name) + "'");
}

std::vector<double> knn_weights(std::span<const double> distances) {
    if (distances.empty()) throw PreconditionError("knn_weights: no distances");
    std::vector<double> d(distances.begin(), distances.end());
    for (auto& v : d) v = std::max(v, kMinDistance);
    const double top = *std::max_element(d.begin(), d.end());
    std::vector<double> w(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) w[i] = top / d[i];
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= sum;
    return w;
}

SelectionDecision select_knn_u(std::span<const double> z, std::span<const Candidate> models, std::size_t k) {
    const auto r = nearest(z, models, k);
    SelectionDecision d;
    d.policy = Policy::knn_u;
    const double w = 1.0 / static_cast<double>(r.size());
    for (const auto& x : r) d.entries.emplace_back(models[x.index].model_id, w);
    return d;
}

SelectionDecision select_knn_w(std::span<const double> z, std::span<const Candidate> models, std::size_t k) {
    const auto r = nearest(z, models, k);
    std::vector<double> dist;
    for (const auto& x : r) dist.push_back(x.distance);
    const auto w = knn_weights(dist);
    SelectionDecision d;
    d.policy = Policy::knn_w;
    for (std::size_t i = 0; i < r.size(); ++i) d.entries.emplace_back(models[r[i].index].model_id, w[i]);
    return d;
}

SelectionDecision select_delta_bm(std::span<const double> z, std::span<const Candidate> models, std::size_t k) {
    if (models.empty()) throw StateError("selection over an empty model registry");
    std::vector<Ranked> inside;
    for (std::size_t i = 0; i < models.size(); ++i) {
        const double raw = geometry::l2_distance(z, models[i].centroid);
        const double d = geometry::normalized_distance(z, models[i].centroid, models[i].radius_scale);
        if (geometry::band_contains(models[i].band, d)) inside.push_back({raw, i});
    }
    if (inside.empty()) {
        auto d = select_knn_w(z, models, k);
        d.policy = Policy::delta_bm;
        d.fallback = true;
        return d;
    }
    std::stable_sort(inside.begin(), inside.end(), [](const Ranked& a, const Ranked& b) { return a.distance < b.distance; });
    SelectionDecision d;
    d.policy = Policy::delta_bm;
    const double w = 1.0 / static_cast<double>(inside.size());
    for (const auto& x : inside) d.entries.emplace_back(models[x.index].model_id, w);
    return d;
}

SelectionDecision select(Policy policy, std::span<const double> z, std::span<const Candidate> models, std::size_t k) {
    if (k == 0) k = std::max<std::size_t>(1, models.size());
    switch (policy) {
        case Policy::knn_u: return select_knn_u(z, models, k);
        case Policy::knn_w: return select_knn_w(z, models, k);
        case Policy::delta_bm: return select_delta_bm(z, models, k);
    }
    throw PreconditionError("unknown policy");
}

nn::Vector ensemble_probabilities(const SelectionDecision& decision, std::span<const double> x,
                                  const ModelLookup& lookup) {
    if (decision.entries.empty()) throw StateError("empty selection decision");
    nn::Vector acc;
    for (const auto& [id, w] : decision.entries) {
        const task::Classifier* m = lookup(id);
        if (!m) throw StateError("selection references missing model " + std::to_string(id));
        const auto p = m->probabilities(x);
        if (acc.empty()) acc.assign(p.size(), 0.0);
        if (p.size() != acc.size()) throw StructuralError("ensemble members disagree on class count");
        for (std::size_t i = 0; i < p.size(); ++i) acc[i] += w * p[i];
    }
    return acc;
}

std::size_t ensemble_predict(const SelectionDecision& decision, std::span<const double> x, const ModelLookup& lookup) {
    return task::argmax(ensemble_probabilities(decision, x, lookup));
}

}  // namespace odrift::selector
