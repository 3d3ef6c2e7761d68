#include "odrift/pipeline.hpp"

#include "odrift/error.hpp"

#include <json.hpp>

#include <chrono>
#include <limits>

namespace odrift::pipeline {

namespace {

using json = nlohmann::ordered_json;

}  // namespace

std::string_view to_string(RunMode m) {
    switch (m) {
        case RunMode::baseline: return "baseline";
        case RunMode::delta_bm: return "delta-bm";
        case RunMode::delta_bm_limited: return "delta-bm-limited";
    }
    return "?";
}

RunMode parse_mode(std::string_view name) {
    if (name == "baseline") return RunMode::baseline;
    if (name == "delta-bm") return RunMode::delta_bm;
    if (name == "delta-bm-limited") return RunMode::delta_bm_limited;
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

nn::Vector Encoder::encode(std::span<const double> x) const {
    if (!model_) return {x.begin(), x.end()};
    return model_->encode(x);
}

std::size_t Encoder::latent_dim(std::size_t input_dim) const {
    if (!model_) return input_dim;
    if (model_->input_dim() != input_dim) throw StructuralError("encoder expects a different input dimension");
    return model_->latent_dim();
}

Encoder load_encoder(const std::string& spec) {
    if (spec.empty() || spec == "identity") return Encoder{};
    return Encoder(dagan::DaGanModel::load(spec));
}

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "mode", "delta", "kl_epsilon", "stable_window", "min_temp_size", "bins", "refresh_interval",
        "max_models", "policy", "k", "training_latency", "min_train_size", "update_interval", "train_epochs",
        "learning_rate", "window", "warmup", "encoder", "dim", "sources", "separation", "sigma", "stages",
        "total", "classes", "label_delay", "seed"};
    return keys;
}

PipelineConfig PipelineConfig::from_config(const config::Config& cfg, const scenario::ScenarioSpec& spec) {
    cfg.reject_unknown(known_config_keys());
    PipelineConfig p;
    p.mode = parse_mode(cfg.get_string("mode", "delta-bm"));
    p.detector.delta = cfg.get_double("delta", p.detector.delta);
    p.detector.kl_epsilon = cfg.get_double("kl_epsilon", p.detector.kl_epsilon);
    p.detector.stable_window = cfg.get_uint("stable_window", p.detector.stable_window);
    p.detector.min_temp_size = cfg.get_uint("min_temp_size", p.detector.min_temp_size);
    p.detector.bin_count = cfg.get_uint("bins", p.detector.bin_count);
    p.detector.refresh_interval = cfg.get_uint("refresh_interval", p.detector.refresh_interval);
    try {
        p.detector.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
    }
    p.max_models = cfg.get_uint("max_models", p.max_models);
    p.window = cfg.get_uint("window", p.window);
    p.warmup = cfg.get_uint("warmup", p.warmup);
    p.encoder = cfg.get_string("encoder", p.encoder);
    if (p.window == 0 || p.warmup == 0) throw ConfigError("window and warmup must be positive");

    auto& m = p.manager;
    m.input_dim = spec.dim;
    m.class_count = spec.class_count;
    m.policy = selector::parse_policy(cfg.get_string("policy", "delta-bm"));
    m.k = cfg.get_uint("k", 0);
    m.training_latency = cfg.get_uint("training_latency", m.training_latency);
    m.min_train_size = cfg.get_uint("min_train_size", m.min_train_size);
    m.update_interval = cfg.get_uint("update_interval", m.update_interval);
    m.train.epochs = cfg.get_uint("train_epochs", m.train.epochs);
    m.train.optimizer.learning_rate = cfg.get_double("learning_rate", m.train.optimizer.learning_rate);
    if (!(m.train.optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    m.seed = spec.seed;
    p.teacher_train = m.train;
    p.teacher_train.seed = spec.seed + 17;
    if (spec.stages.size() > 1) p.policy_eval_from = spec.stages.back().start;
    return p;
}

task::Classifier train_teacher(std::span<const StreamItem> warmup, const manager::ManagerConfig& config,
                               const task::TrainConfig& train) {
    std::vector<nn::Vector> xs;
    std::vector<std::size_t> labels;
    for (const auto& it : warmup) {
        if (!it.label) continue;
        xs.push_back(it.x);
        labels.push_back(*it.label);
    }
    if (xs.empty()) throw PreconditionError("teacher needs labeled warm-up data");
    auto t = task::Classifier::make(config.input_dim, config.teacher_hidden, config.class_count, train.seed);
    t.train(xs, labels, train);
    return t;
}

RunResult run_pipeline(std::span<const StreamItem> stream, const Encoder& encoder, const PipelineConfig& config,
                       const task::Classifier& teacher) {
    auto mcfg = config.manager;
    mcfg.detection_enabled = config.mode != RunMode::baseline;
    if (config.mode == RunMode::delta_bm_limited) mcfg.max_models = config.max_models;
    else mcfg.max_models.reset();
    const std::size_t latent_dim = encoder.latent_dim(mcfg.input_dim);

    RunResult r;
    r.manager = std::make_unique<manager::Manager>(mcfg, config.detector, latent_dim);
    auto& mgr = *r.manager;
    mgr.set_teacher(teacher);

    // Ground-truth bookkeeping for scoring only.
    std::map<std::uint64_t, std::size_t> source_of;
    std::map<std::uint64_t, std::size_t> cluster_source;
    std::set<std::size_t> stabilized;
    std::vector<std::vector<std::size_t>> promotion_sources;
    std::set<std::size_t> introduced;
    std::uint64_t assign_hits = 0;

    const auto t0 = std::chrono::steady_clock::now();
    manager::LabeledSample s;
    for (const auto& item : stream) {
        if (item.source) {
            source_of[item.index] = *item.source;
            introduced.insert(*item.source);
        }
        s.index = item.index;
        s.x = item.x;
        s.z = encoder.encode(item.x);
        s.label = item.label;
        s.available_at = item.available_at;
        std::size_t prediction = 0;
        try {
            auto h = mgr.handle(s);
            prediction = h.prediction;
            if (h.observation.drift) {
                const auto& ev = *h.observation.drift;
                std::vector<std::size_t> srcs;
                for (auto m : ev.member_samples) {
                    if (auto it = source_of.find(m); it != source_of.end()) srcs.push_back(it->second);
                }
                const auto [maj, share] = metrics::majority(srcs);
                promotion_sources.push_back(srcs);
                r.promotions.push_back({ev.cluster_id, ev.sample_index, ev.member_count, maj, share});
                if (!srcs.empty()) {
                    cluster_source[ev.cluster_id] = maj;
                    stabilized.insert(maj);
                }
            }
            if (mcfg.detection_enabled && item.source && stabilized.count(*item.source) &&
                !mgr.detector().permanents().empty()) {
                // Nearest permanent by normalized distance, restricted to the
                // matched clusters when there are any.
                const auto& obs = h.observation.assignment;
                double best = std::numeric_limits<double>::infinity();
                std::uint64_t best_id = 0;
                for (const auto& c : mgr.detector().permanents()) {
                    if (!obs.temporary &&
                        std::find(obs.clusters.begin(), obs.clusters.end(), c.id) == obs.clusters.end()) {
                        continue;
                    }
                    const double d = geometry::l2_distance(s.z, c.geometry.centroid) / c.geometry.radius_scale;
                    if (d < best) {
                        best = d;
                        best_id = c.id;
                    }
                }
                auto cs = cluster_source.find(best_id);
                assign_hits += cs != cluster_source.end() && cs->second == *item.source;
                ++r.assignment_scored;
            }
        } catch (const Error& e) {
            throw Error("item " + std::to_string(item.index) + ": " + e.what(), e.category());
        }

        r.predictions.push_back(prediction);
        r.correct.push_back(item.label && *item.label == prediction);
        const std::size_t serving = std::max<std::size_t>(1, mgr.registry().cluster_model_count());
        r.peak_model_count = std::max(r.peak_model_count, serving);

        if (mcfg.detection_enabled && config.policy_eval_from && item.index >= *config.policy_eval_from && item.label) {
            for (auto p : {selector::Policy::knn_u, selector::Policy::knn_w, selector::Policy::delta_bm}) {
                auto& sc = r.policy_scores[p];
                sc.hits += mgr.predict(s.x, s.z, p) == *item.label;
                ++sc.total;
            }
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    mgr.finish(stream.empty() ? 0 : stream.back().index + 1);

    const double secs = std::chrono::duration<double>(t1 - t0).count();
    r.samples_per_second = secs > 0 ? static_cast<double>(stream.size()) / secs : 0.0;
    r.events = mgr.events();
    r.window_accuracy = metrics::windowed_accuracy(r.correct, config.window);
    r.accuracy = metrics::accuracy(r.correct);
    r.drift = metrics::score_drift(promotion_sources, introduced.size());
    r.assignment_accuracy =
        r.assignment_scored ? static_cast<double>(assign_hits) / static_cast<double>(r.assignment_scored) : 0.0;
    return r;
}

RunResult run_scenario(const scenario::Scenario& sc, const PipelineConfig& config, const Encoder& encoder) {
    const auto first = sc.spec().stages.front().sources.front();
    const auto warm = sc.draw(first, config.warmup, sc.spec().seed + 1);
    const auto teacher = train_teacher(warm, config.manager, config.teacher_train);
    const auto stream = sc.generate();
    return run_pipeline(stream, encoder, config, teacher);
}

std::string event_to_json(const manager::ManagerEvent& ev) {
    json j;
    switch (ev.type) {
        case manager::EventType::drift:
            j["type"] = "drift";
            j["cluster_id"] = ev.cluster_id;
            j["sample_index"] = ev.sample_index;
            j["member_count"] = ev.member_count;
            break;
        case manager::EventType::model:
            j["type"] = "model";
            j["cluster_id"] = ev.cluster_id;
            j["kind"] = std::string(manager::to_string(ev.kind));
            j["sample_count"] = ev.sample_count;
            j["sample_index"] = ev.sample_index;
            break;
        case manager::EventType::evict:
            j["type"] = "evict";
            j["cluster_id"] = ev.cluster_id;
            j["sample_index"] = ev.sample_index;
            j["member_count"] = ev.member_count;
            break;
    }
    return j.dump();
}

std::string metrics_to_json(const RunResult& r, const PipelineConfig& config) {
    json j;
    j["mode"] = std::string(to_string(config.mode));
    j["items"] = r.correct.size();
    j["accuracy"] = r.accuracy;
    j["window"] = config.window;
    j["window_accuracy"] = r.window_accuracy;
    j["promotions"] = r.promotions.size();
    j["drift_precision"] = r.drift.precision;
    j["drift_recall"] = r.drift.recall;
    j["drift_f1"] = r.drift.f1;
    j["assignment_accuracy"] = r.assignment_accuracy;
    j["peak_model_count"] = r.peak_model_count;
    j["samples_per_second"] = r.samples_per_second;
    json pol = json::object();
    for (const auto& [p, s] : r.policy_scores) pol[std::string(selector::to_string(p))] = s.accuracy();
    j["policy_accuracy"] = pol;
    return j.dump(2);
}

}  // namespace odrift::pipeline
