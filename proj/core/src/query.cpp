#include "odrift/query.hpp"

#include "odrift/error.hpp"

#include <string>

namespace odrift::query {

std::string_view to_string(FilterMode m) {
    switch (m) {
        case FilterMode::no_filter: return "no-filter";
        case FilterMode::specialized_filter: return "specialized-filter";
        case FilterMode::global_filter: return "global-filter";
    }
    return "?";
}

FilterMode parse_filter_mode(std::string_view name) {
    if (name == "no-filter") return FilterMode::no_filter;
    if (name == "specialized-filter") return FilterMode::specialized_filter;
    if (name == "global-filter") return FilterMode::global_filter;
    throw ConfigError("unknown filter mode '" + std::string(name) + "'");
}

FilterBank build_filters(const manager::Manager& mgr, std::size_t target_class,
                         std::span<const stream::StreamItem> global_data, const filter::FilterTrainConfig& config) {
    if (target_class >= mgr.config().class_count) throw QueryError("unknown class " + std::to_string(target_class));
    FilterBank bank;
    for (const auto& [cluster, model] : mgr.registry().cluster_index()) {
        if (cluster == manager::kGlobalCluster) continue;
        std::vector<nn::Vector> xs;
        std::vector<std::size_t> labels;
        for (const auto& m : mgr.cluster_members(cluster)) {
            if (!m.label) continue;
            xs.push_back(m.x);
            labels.push_back(*m.label);
        }
        if (xs.empty()) continue;
        auto cfg = config;
        cfg.seed = config.seed + cluster;
        bank.per_cluster.emplace(cluster, filter::train_filter(xs, labels, target_class, cfg));
    }
    std::vector<nn::Vector> xs;
    std::vector<std::size_t> labels;
    for (const auto& it : global_data) {
        if (!it.label) continue;
        xs.push_back(it.x);
        labels.push_back(*it.label);
    }
    if (!xs.empty()) bank.global = filter::train_filter(xs, labels, target_class, config);
    return bank;
}

QueryResult aggregation_query(std::span<const stream::StreamItem> segment, const pipeline::Encoder& encoder,
                              const manager::Manager& mgr, std::size_t target_class, FilterMode mode,
                              const FilterBank& filters) {
    if (target_class >= mgr.config().class_count) throw QueryError("unknown class " + std::to_string(target_class));
    if (mode == FilterMode::global_filter && !filters.global) throw QueryError("no global filter available");

    const auto cands = mgr.candidates();
    std::map<std::uint64_t, std::uint64_t> cluster_of_model;
    for (const auto& c : cands) cluster_of_model[c.model_id] = c.cluster_id;

    QueryResult q;
    for (const auto& item : segment) {
        const auto z = encoder.encode(item.x);
        ItemAudit a;
        a.index = item.index;
        a.truly_target = item.label && *item.label == target_class;
        a.predicted_target = mgr.predict(item.x, z, selector::Policy::delta_bm) == target_class;

        if (mode == FilterMode::global_filter) {
            a.gate_passed = filters.global->pass(item.x);
        } else if (mode == FilterMode::specialized_filter && !cands.empty()) {
            const auto d = selector::select(selector::Policy::delta_bm, z, cands);
            const auto cluster = cluster_of_model.at(d.entries.front().first);
            if (auto f = filters.per_cluster.find(cluster); f != filters.per_cluster.end()) {
                a.gate_passed = f->second.pass(item.x);
            }
        }

        ++q.items;
        q.true_count += a.truly_target;
        if (a.gate_passed) {
            ++q.model_invocations;
            q.count += a.predicted_target;
        } else if (a.predicted_target) {
            ++q.filter_false_negatives;
        }
        q.audit.push_back(a);
    }
    q.accuracy = metrics::query_accuracy(q.count, q.true_count);
    q.reduction = q.items ? 1.0 - static_cast<double>(q.model_invocations) / static_cast<double>(q.items) : 0.0;
    return q;
}

}  // namespace odrift::query
