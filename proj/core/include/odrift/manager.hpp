#pragma once

#include "odrift/detector.hpp"
#include "odrift/selector.hpp"
#include "odrift/task_model.hpp"

#include <cstdint>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

// Model lifecycle around the detector: one task model per permanent
// cluster, lite (teacher-distilled) models until enough oracle labels have
// arrived, batched fine-tuning of inlier data and a model-count limit.
namespace odrift::manager {

using nn::Vector;

enum class ModelKind : std::uint8_t { global = 0, specialized = 1, lite = 2 };
enum class LabelSource : std::uint8_t { oracle = 0, teacher = 1 };

std::string_view to_string(ModelKind k);

// cluster_id used by the global model.
inline constexpr std::uint64_t kGlobalCluster = 0;

struct TrainingMeta {
    std::uint64_t sample_count = 0;
    LabelSource label_source = LabelSource::oracle;
    std::uint64_t seed = 0;
    std::uint64_t trained_at = 0;  // stream index of publication
    std::uint64_t updates = 0;
};

struct ModelRecord {
    std::uint64_t model_id = 0;
    std::uint64_t cluster_id = kGlobalCluster;
    ModelKind kind = ModelKind::global;
    task::Classifier predictor;
    TrainingMeta meta;
};

class ModelRegistry {
public:
    explicit ModelRegistry(std::optional<std::size_t> max_models = std::nullopt) : max_models_(max_models) {}

    // Assigns a fresh id. A cluster's previous active record is archived.
    std::uint64_t add(ModelRecord record);
    // Moves an active record to the archive. Returns false when unknown.
    bool archive(std::uint64_t model_id);

    const ModelRecord* get(std::uint64_t model_id) const;
    const ModelRecord* active_for(std::uint64_t cluster_id) const;
    ModelRecord* mutable_active_for(std::uint64_t cluster_id);
    // Active models bound to clusters (the global model is not counted).
    std::size_t cluster_model_count() const;

    const std::map<std::uint64_t, ModelRecord>& records() const noexcept { return records_; }
    const std::map<std::uint64_t, std::uint64_t>& cluster_index() const noexcept { return cluster_index_; }
    const std::vector<ModelRecord>& archived() const noexcept { return archived_; }
    std::optional<std::size_t> max_models() const noexcept { return max_models_; }
    std::uint64_t next_id() const noexcept { return next_id_; }

    std::vector<std::uint8_t> snapshot() const;
    static ModelRegistry restore(std::span<const std::uint8_t> bytes);

private:
    std::map<std::uint64_t, ModelRecord> records_;
    std::map<std::uint64_t, std::uint64_t> cluster_index_;
    std::vector<ModelRecord> archived_;
    std::optional<std::size_t> max_models_;
    std::uint64_t next_id_ = 1;
};

struct EvictionRecord {
    std::uint64_t cluster_id = 0;
    std::uint64_t model_id = 0;
    std::uint64_t member_count = 0;
};

// When the registry holds more cluster models than max_models, archives the
// model of the cluster with the fewest members (ties: smaller cluster id).
// `exclude` names a cluster that may not be chosen.
std::optional<EvictionRecord> evict_if_over_limit(ModelRegistry& registry,
                                                  const std::map<std::uint64_t, std::uint64_t>& member_counts,
                                                  std::optional<std::uint64_t> exclude = std::nullopt);

struct ManagerConfig {
    std::size_t input_dim = 0;
    std::size_t class_count = 0;
    std::vector<std::size_t> teacher_hidden = {128, 64};
    std::vector<std::size_t> student_hidden = {32};
    std::size_t min_train_size = 200;
    std::size_t update_interval = 256;
    std::size_t update_epochs = 1;
    task::TrainConfig train;
    std::optional<std::size_t> max_models;
    // Stream items between a training trigger and publication of its model.
    std::uint64_t training_latency = 50;
    bool detection_enabled = true;
    selector::Policy policy = selector::Policy::delta_bm;
    std::size_t k = 0;  // 0: all active models
    std::uint64_t seed = 1;

    void validate() const;
};

struct LabeledSample {
    std::uint64_t index = 0;
    Vector x;
    Vector z;
    std::optional<std::size_t> label;
    std::uint64_t available_at = 0;
};

enum class EventType : std::uint8_t { drift = 0, model = 1, evict = 2 };

struct ManagerEvent {
    EventType type = EventType::drift;
    std::uint64_t cluster_id = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t member_count = 0;  // drift / evict
    ModelKind kind = ModelKind::lite;  // model
    std::uint64_t sample_count = 0;  // model
};

struct HandleResult {
    std::size_t prediction = 0;
    detector::Observation observation;
    std::optional<selector::SelectionDecision> decision;  // empty when the global model answered
    std::vector<ManagerEvent> events;
};

// Trains a fresh student-sized classifier on oracle labels.
task::Classifier generate_specialized(std::span<const Vector> xs, std::span<const std::size_t> labels,
                                      const ManagerConfig& config, std::uint64_t seed);
// Labels `xs` with the teacher and trains a student-sized classifier on them.
task::Classifier generate_lite(std::span<const Vector> xs, const task::Classifier* teacher,
                               const ManagerConfig& config, std::uint64_t seed);
// Fine-tunes in place for config.update_epochs; an empty batch is a no-op.
void update_model(ModelRecord& record, std::span<const Vector> xs, std::span<const std::size_t> labels,
                  const ManagerConfig& config);

class Manager {
public:
    Manager(ManagerConfig config, detector::DetectorParams detector_params, std::size_t latent_dim);
    ~Manager();
    Manager(const Manager&) = delete;
    Manager& operator=(const Manager&) = delete;

    // Registers the global (teacher) model.
    void set_teacher(task::Classifier teacher);
    HandleResult handle(const LabeledSample& sample);
    // Publishes every outstanding training job, stamped with `index`.
    std::vector<ManagerEvent> finish(std::uint64_t index);

    // Prediction for an arbitrary sample under a given policy, using the
    // current registry. Falls back to the global model with no cluster models.
    std::size_t predict(std::span<const double> x, std::span<const double> z, selector::Policy policy) const;
    std::vector<selector::Candidate> candidates() const;

    const detector::Detector& detector() const noexcept { return detector_; }
    const ModelRegistry& registry() const noexcept { return registry_; }
    const std::vector<ManagerEvent>& events() const noexcept { return events_; }
    const std::set<std::uint64_t>& dormant() const noexcept { return dormant_; }
    const ManagerConfig& config() const noexcept { return config_; }
    const ModelRecord* teacher() const;
    std::uint64_t update_count() const noexcept { return update_count_; }
    // Number of lite -> specialized transitions per cluster.
    const std::map<std::uint64_t, std::uint64_t>& replacements() const noexcept { return replacements_; }
    // Retained raw data for a cluster (members with their labels).
    std::vector<LabeledSample> cluster_members(std::uint64_t cluster_id) const;

private:
    struct ClusterState {
        std::vector<LabeledSample> members;
        std::size_t arrived_labels = 0;
        bool specialized_triggered = false;
        std::vector<std::size_t> update_buffer;  // member positions
    };
    struct PendingTraining {
        std::uint64_t cluster_id = 0;
        ModelKind kind = ModelKind::lite;
        std::uint64_t publish_at = 0;
        std::uint64_t sample_count = 0;
        std::uint64_t seed = 0;
        std::future<task::Classifier> result;
    };
    struct LabelArrival {
        std::uint64_t available_at;
        std::uint64_t cluster_id;
        std::size_t position;
        bool operator>(const LabelArrival& o) const {
            return std::tie(available_at, cluster_id, position) > std::tie(o.available_at, o.cluster_id, o.position);
        }
    };

    void publish_due(std::uint64_t index, bool all, std::vector<ManagerEvent>& out);
    void deliver_labels(std::uint64_t index);
    void on_promotion(const detector::DriftEvent& ev, std::uint64_t index, std::vector<ManagerEvent>& out);
    void on_inlier(std::uint64_t cluster_id, const LabeledSample& sample, std::uint64_t index);
    void maybe_trigger_specialized(std::uint64_t cluster_id, std::uint64_t index);
    void flush_updates(std::uint64_t cluster_id);
    void schedule(std::uint64_t cluster_id, ModelKind kind, std::vector<Vector> xs, std::vector<std::size_t> labels,
                  std::uint64_t index);
    void check_sample(const LabeledSample& sample) const;
    std::map<std::uint64_t, std::uint64_t> member_counts() const;
    std::uint64_t training_seed(std::uint64_t cluster_id, ModelKind kind) const;

    ManagerConfig config_;
    detector::Detector detector_;
    ModelRegistry registry_;
    std::map<std::uint64_t, ClusterState> clusters_;
    std::map<std::uint64_t, LabeledSample> temporary_;  // keyed by stream index
    std::vector<PendingTraining> pending_;
    std::vector<LabelArrival> arrivals_;  // min-heap
    std::set<std::uint64_t> dormant_;
    std::vector<ManagerEvent> events_;
    std::map<std::uint64_t, std::uint64_t> replacements_;
    std::uint64_t update_count_ = 0;
};

}  // namespace odrift::manager
