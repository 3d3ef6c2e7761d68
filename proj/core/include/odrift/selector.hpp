#pragma once

#include "odrift/geometry.hpp"
#include "odrift/task_model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

// Ensemble selection over cluster models: KNN-U, KNN-W and band membership
// (delta-BM) with KNN-W fallback.
namespace odrift::selector {

enum class Policy : std::uint8_t { knn_u = 0, knn_w = 1, delta_bm = 2 };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);

// Immutable view of one active model and its cluster's geometry.
struct Candidate {
    std::uint64_t model_id = 0;
    std::uint64_t cluster_id = 0;
    geometry::LatentVector centroid;
    double radius_scale = 1.0;
    geometry::DeltaBand band;
};

struct SelectionDecision {
    std::vector<std::pair<std::uint64_t, double>> entries;  // (model id, weight)
    Policy policy = Policy::knn_w;
    bool fallback = false;
};

inline constexpr double kMinDistance = 1e-9;

// Inverse-distance weights d'_i / sum(d'), d'_i = max(d) / d_i, with every
// distance floored at kMinDistance.
std::vector<double> knn_weights(std::span<const double> distances);

SelectionDecision select_knn_u(std::span<const double> z, std::span<const Candidate> models, std::size_t k);
SelectionDecision select_knn_w(std::span<const double> z, std::span<const Candidate> models, std::size_t k);
SelectionDecision select_delta_bm(std::span<const double> z, std::span<const Candidate> models, std::size_t k);
// k = 0 means "all candidates".
SelectionDecision select(Policy policy, std::span<const double> z, std::span<const Candidate> models, std::size_t k = 0);

using ModelLookup = std::function<const task::Classifier*(std::uint64_t model_id)>;

// Weighted average of member probabilities, argmax with lowest-index ties.
std::size_t ensemble_predict(const SelectionDecision& decision, std::span<const double> x, const ModelLookup& lookup);
nn::Vector ensemble_probabilities(const SelectionDecision& decision, std::span<const double> x,
                                  const ModelLookup& lookup);

}  // namespace odrift::selector
