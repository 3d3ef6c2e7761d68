#pragma once

#include "odrift/config.hpp"
#include "odrift/dagan.hpp"
#include "odrift/manager.hpp"
#include "odrift/metrics.hpp"
#include "odrift/scenario.hpp"
#include "odrift/stream_io.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

// Drives encoder -> detector -> manager -> selector over a stream and
// collects run metrics.
namespace odrift::pipeline {

using stream::StreamItem;

enum class RunMode : std::uint8_t { baseline = 0, delta_bm = 1, delta_bm_limited = 2 };

std::string_view to_string(RunMode m);
RunMode parse_mode(std::string_view name);

// Identity projection or a trained DA-GAN encoder.
class Encoder {
public:
    Encoder() = default;
    explicit Encoder(dagan::DaGanModel model) : model_(std::make_shared<dagan::DaGanModel>(std::move(model))) {}

    nn::Vector encode(std::span<const double> x) const;
    std::size_t latent_dim(std::size_t input_dim) const;
    bool identity() const noexcept { return !model_; }

private:
    std::shared_ptr<const dagan::DaGanModel> model_;
};

Encoder load_encoder(const std::string& spec);

struct PipelineConfig {
    RunMode mode = RunMode::delta_bm;
    detector::DetectorParams detector;
    manager::ManagerConfig manager;
    std::size_t max_models = 3;  // delta_bm_limited only
    std::size_t window = 500;
    std::size_t warmup = 1000;
    task::TrainConfig teacher_train;
    // Evaluate every policy on items at or after this index (default: start
    // of the last stage).
    std::optional<std::uint64_t> policy_eval_from;
    std::string encoder = "identity";

    // Keys: mode, delta, kl_epsilon, stable_window, min_temp_size, bins,
    // refresh_interval, max_models, policy, k, training_latency,
    // min_train_size, update_interval, train_epochs, learning_rate, window,
    // warmup, encoder (+ the scenario keys).
    static PipelineConfig from_config(const config::Config& cfg, const scenario::ScenarioSpec& spec);
};

const std::set<std::string>& known_config_keys();

struct PromotionRecord {
    std::uint64_t cluster_id = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t member_count = 0;
    std::size_t majority_source = 0;
    double purity = 0.0;
};

struct PolicyScore {
    std::uint64_t hits = 0;
    std::uint64_t total = 0;
    double accuracy() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
};

struct RunResult {
    std::vector<std::size_t> predictions;
    std::vector<std::uint8_t> correct;
    std::vector<double> window_accuracy;
    double accuracy = 0.0;
    std::vector<manager::ManagerEvent> events;
    std::vector<PromotionRecord> promotions;
    metrics::DriftScore drift;
    double assignment_accuracy = 0.0;
    std::uint64_t assignment_scored = 0;
    double samples_per_second = 0.0;
    std::size_t peak_model_count = 0;
    std::map<selector::Policy, PolicyScore> policy_scores;
    std::unique_ptr<manager::Manager> manager;
};

task::Classifier train_teacher(std::span<const StreamItem> warmup, const manager::ManagerConfig& config,
                               const task::TrainConfig& train);

RunResult run_pipeline(std::span<const StreamItem> stream, const Encoder& encoder, const PipelineConfig& config,
                       const task::Classifier& teacher);

// Scenario + warm-up teacher + run, as used by the CLI.
RunResult run_scenario(const scenario::Scenario& sc, const PipelineConfig& config, const Encoder& encoder);

std::string event_to_json(const manager::ManagerEvent& ev);
std::string metrics_to_json(const RunResult& r, const PipelineConfig& config);

}  // namespace odrift::pipeline
