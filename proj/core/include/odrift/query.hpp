#pragma once

#include "odrift/filter.hpp"
#include "odrift/manager.hpp"
#include "odrift/pipeline.hpp"

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

// COUNT(target class) over a stream segment, optionally gated by filters.
namespace odrift::query {

enum class FilterMode : std::uint8_t { no_filter = 0, specialized_filter = 1, global_filter = 2 };

std::string_view to_string(FilterMode m);
FilterMode parse_filter_mode(std::string_view name);

struct FilterBank {
    std::map<std::uint64_t, filter::FilterModel> per_cluster;
    std::optional<filter::FilterModel> global;
};

// One filter per cluster with an active model, trained on the cluster's
// labeled members; the global filter is trained on `global_data`.
FilterBank build_filters(const manager::Manager& mgr, std::size_t target_class,
                         std::span<const stream::StreamItem> global_data, const filter::FilterTrainConfig& config);

struct ItemAudit {
    std::uint64_t index = 0;
    bool gate_passed = true;
    bool predicted_target = false;  // task model output (evaluated for audit even when gated)
    bool truly_target = false;
};

struct QueryResult {
    std::uint64_t count = 0;
    std::uint64_t true_count = 0;
    double accuracy = 0.0;
    std::uint64_t items = 0;
    std::uint64_t model_invocations = 0;
    double reduction = 0.0;  // fraction of items that skipped the task model
    std::uint64_t filter_false_negatives = 0;
    std::vector<ItemAudit> audit;
};

QueryResult aggregation_query(std::span<const stream::StreamItem> segment, const pipeline::Encoder& encoder,
                              const manager::Manager& mgr, std::size_t target_class, FilterMode mode,
                              const FilterBank& filters);

}  // namespace odrift::query
