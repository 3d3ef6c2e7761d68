#include "odrift/manager.hpp"

#include "odrift/binary_io.hpp"
#include "odrift/error.hpp"

#include <algorithm>
#include <string>

namespace odrift::manager {

namespace {

constexpr std::uint32_t kRegistryVersion = 1;

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void write_record(io::ByteWriter& w, const ModelRecord& r, bool active) {
    w.u64(r.model_id);
    w.u64(r.cluster_id);
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.u8(active ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(r.predictor.class_count()));
    w.u64(r.meta.sample_count);
    w.u8(static_cast<std::uint8_t>(r.meta.label_source));
    w.u64(r.meta.seed);
    w.u64(r.meta.trained_at);
    w.u64(r.meta.updates);
    w.u64(r.predictor.shift().size());
    for (double v : r.predictor.shift()) w.f64(v);
    for (double v : r.predictor.scale()) w.f64(v);
    r.predictor.network().serialize(w);
}

}  // namespace

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::global: return "global";
        case ModelKind::specialized: return "specialized";
        case ModelKind::lite: return "lite";
    }
    return "?";
}

std::uint64_t ModelRegistry::add(ModelRecord record) {
    if (record.kind == ModelKind::specialized && record.meta.label_source != LabelSource::oracle) {
        throw PreconditionError("specialized models must be trained on oracle labels");
    }
    if (record.kind == ModelKind::lite && record.meta.label_source != LabelSource::teacher) {
        throw PreconditionError("lite models must be trained on teacher labels");
    }
    if (auto it = cluster_index_.find(record.cluster_id); it != cluster_index_.end()) archive(it->second);
    record.model_id = next_id_++;
    const auto id = record.model_id;
    cluster_index_[record.cluster_id] = id;
    records_.emplace(id, std::move(record));
    return id;
}

bool ModelRegistry::archive(std::uint64_t model_id) {
    auto it = records_.find(model_id);
    if (it == records_.end()) return false;
    auto ci = cluster_index_.find(it->second.cluster_id);
    if (ci != cluster_index_.end() && ci->second == model_id) cluster_index_.erase(ci);
    archived_.push_back(std::move(it->second));
    records_.erase(it);
    return true;
}

const ModelRecord* ModelRegistry::get(std::uint64_t model_id) const {
    auto it = records_.find(model_id);
    return it == records_.end() ? nullptr : &it->second;
}

const ModelRecord* ModelRegistry::active_for(std::uint64_t cluster_id) const {
    auto it = cluster_index_.find(cluster_id);
    return it == cluster_index_.end() ? nullptr : get(it->second);
}

ModelRecord* ModelRegistry::mutable_active_for(std::uint64_t cluster_id) {
    auto it = cluster_index_.find(cluster_id);
    if (it == cluster_index_.end()) return nullptr;
    auto r = records_.find(it->second);
    return r == records_.end() ? nullptr : &r->second;
}

std::size_t ModelRegistry::cluster_model_count() const {
    return cluster_index_.size() - (cluster_index_.count(kGlobalCluster) ? 1 : 0);
}

std::vector<std::uint8_t> ModelRegistry::snapshot() const {
    io::ByteWriter w;
    w.magic("ODMR");
    w.u32(kRegistryVersion);
    w.u64(next_id_);
    w.u64(max_models_ ? *max_models_ : 0);
    w.u64(records_.size() + archived_.size());
    for (const auto& [id, r] : records_) write_record(w, r, true);
    for (const auto& r : archived_) write_record(w, r, false);
    return w.take();
}

ModelRegistry ModelRegistry::restore(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("ODMR");
    const auto version = r.u32();
    if (version != kRegistryVersion) throw FormatError("unsupported ODMR version " + std::to_string(version));
    const auto next_id = r.u64();
    const auto max_models = r.u64();
    ModelRegistry reg(max_models ? std::optional<std::size_t>(max_models) : std::nullopt);
    reg.next_id_ = next_id;
    const auto n = r.count(16);
    for (std::uint64_t i = 0; i < n; ++i) {
        ModelRecord rec;
        rec.model_id = r.u64();
        rec.cluster_id = r.u64();
        const auto kind = r.u8();
        const auto active = r.u8();
        if (kind > 2 || active > 1) throw FormatError("bad model record flags");
        rec.kind = static_cast<ModelKind>(kind);
        const auto classes = r.u32();
        rec.meta.sample_count = r.u64();
        const auto src = r.u8();
        if (src > 1) throw FormatError("bad label source");
        rec.meta.label_source = static_cast<LabelSource>(src);
        rec.meta.seed = r.u64();
        rec.meta.trained_at = r.u64();
        rec.meta.updates = r.u64();
        const auto n_std = r.count(16);
        nn::Vector shift(n_std);
        nn::Vector scale(n_std);
        for (auto& v : shift) v = r.f64();
        for (auto& v : scale) v = r.f64();
        auto net = nn::Network::deserialize(r);
        try {
            rec.predictor = task::Classifier(std::move(net), classes);
            rec.predictor.set_standardization(std::move(shift), std::move(scale));
        } catch (const StructuralError& e) {
            throw FormatError(e.what());
        }
        if (rec.model_id == 0 || rec.model_id >= next_id) throw FormatError("model id out of range");
        if (active) {
            if (reg.cluster_index_.count(rec.cluster_id)) throw FormatError("two active models for one cluster");
            reg.cluster_index_[rec.cluster_id] = rec.model_id;
            const auto id = rec.model_id;
            if (!reg.records_.emplace(id, std::move(rec)).second) throw FormatError("duplicate model id");
        } else {
            reg.archived_.push_back(std::move(rec));
        }
    }
    r.expect_end();
    return reg;
}

std::optional<EvictionRecord> evict_if_over_limit(ModelRegistry& registry,
                                                  const std::map<std::uint64_t, std::uint64_t>& member_counts,
                                                  std::optional<std::uint64_t> exclude) {
    const auto limit = registry.max_models();
    if (!limit || registry.cluster_model_count() <= *limit) return std::nullopt;
    std::optional<EvictionRecord> best;
    for (const auto& [cluster, model] : registry.cluster_index()) {
        if (cluster == kGlobalCluster || (exclude && cluster == *exclude)) continue;
        auto it = member_counts.find(cluster);
        const std::uint64_t count = it == member_counts.end() ? 0 : it->second;
        // cluster_index is ordered by id, so strict < keeps the older one on ties.
        if (!best || count < best->member_count) best = EvictionRecord{cluster, model, count};
    }
    if (best) registry.archive(best->model_id);
    return best;
}

void ManagerConfig::validate() const {
    if (input_dim == 0 || class_count < 1) throw ConfigError("manager needs input_dim and class_count");
    if (min_train_size == 0 || update_interval == 0) throw ConfigError("training sizes must be positive");
    if (max_models && *max_models == 0) throw ConfigError("max_models must be positive");
}

task::Classifier generate_specialized(std::span<const Vector> xs, std::span<const std::size_t> labels,
                                      const ManagerConfig& config, std::uint64_t seed) {
    auto model = task::Classifier::make(config.input_dim, config.student_hidden, config.class_count, seed);
    auto tc = config.train;
    tc.seed = mix(seed);
    model.train(xs, labels, tc);
    return model;
}

task::Classifier generate_lite(std::span<const Vector> xs, const task::Classifier* teacher,
                               const ManagerConfig& config, std::uint64_t seed) {
    if (!teacher) throw StateError("lite model requested without a teacher");
    std::vector<std::size_t> labels;
    labels.reserve(xs.size());
    for (const auto& x : xs) labels.push_back(teacher->predict(x));
    auto model = task::Classifier::make(config.input_dim, config.student_hidden, config.class_count, seed);
    if (model.param_count() >= teacher->param_count()) throw PreconditionError("student is not smaller than its teacher");
    auto tc = config.train;
    tc.seed = mix(seed);
    model.train(xs, labels, tc);
    return model;
}

void update_model(ModelRecord& record, std::span<const Vector> xs, std::span<const std::size_t> labels,
                  const ManagerConfig& config) {
    if (xs.empty()) return;
    auto tc = config.train;
    tc.epochs = config.update_epochs;
    tc.seed = mix(record.meta.seed + record.meta.updates + 1);
    record.predictor.train(xs, labels, tc);
    ++record.meta.updates;
}

Manager::Manager(ManagerConfig config, detector::DetectorParams detector_params, std::size_t latent_dim)
    : config_(std::move(config)), detector_(detector_params, latent_dim), registry_(config_.max_models) {
    config_.validate();
}

Manager::~Manager() {
    for (auto& p : pending_) {
        if (p.result.valid()) p.result.wait();
    }
}

void Manager::set_teacher(task::Classifier teacher) {
    if (teacher.input_dim() != config_.input_dim || teacher.class_count() != config_.class_count) {
        throw StructuralError("teacher shape does not match the manager configuration");
    }
    ModelRecord r;
    r.cluster_id = kGlobalCluster;
    r.kind = ModelKind::global;
    r.predictor = std::move(teacher);
    r.meta.label_source = LabelSource::oracle;
    registry_.add(std::move(r));
}

const ModelRecord* Manager::teacher() const { return registry_.active_for(kGlobalCluster); }

void Manager::check_sample(const LabeledSample& s) const {
    if (s.x.size() != config_.input_dim) throw StructuralError("sample dimension " + std::to_string(s.x.size()));
    if (config_.detection_enabled && s.z.size() != detector_.latent_dim()) {
        throw StructuralError("latent dimension " + std::to_string(s.z.size()));
    }
    if (s.label && *s.label >= config_.class_count) {
        throw StructuralError("label " + std::to_string(*s.label) + " outside [0, " +
                              std::to_string(config_.class_count) + ")");
    }
}

std::uint64_t Manager::training_seed(std::uint64_t cluster_id, ModelKind kind) const {
    return mix(config_.seed ^ mix(cluster_id * 4 + static_cast<std::uint64_t>(kind)));
}

std::map<std::uint64_t, std::uint64_t> Manager::member_counts() const {
    std::map<std::uint64_t, std::uint64_t> m;
    for (const auto& c : detector_.permanents()) m[c.id] = c.member_count();
    return m;
}

void Manager::schedule(std::uint64_t cluster_id, ModelKind kind, std::vector<Vector> xs,
                       std::vector<std::size_t> labels, std::uint64_t index) {
    PendingTraining p;
    p.cluster_id = cluster_id;
    p.kind = kind;
    p.publish_at = index + config_.training_latency;
    p.sample_count = xs.size();
    p.seed = training_seed(cluster_id, kind);
    const ManagerConfig cfg = config_;
    const std::uint64_t seed = p.seed;
    if (kind == ModelKind::specialized) {
        p.result = std::async(std::launch::async, [cfg, seed, xs = std::move(xs), labels = std::move(labels)] {
            return generate_specialized(xs, labels, cfg, seed);
        });
    } else {
        const auto* t = teacher();
        if (!t) throw StateError("lite model requested without a teacher");
        p.result = std::async(std::launch::async, [cfg, seed, xs = std::move(xs), teacher = t->predictor] {
            return generate_lite(xs, &teacher, cfg, seed);
        });
    }
    pending_.push_back(std::move(p));
}

void Manager::publish_due(std::uint64_t index, bool all, std::vector<ManagerEvent>& out) {
    std::vector<PendingTraining> keep;
    for (auto& p : pending_) {
        if (!all && p.publish_at > index) {
            keep.push_back(std::move(p));
            continue;
        }
        auto model = p.result.get();
        if (dormant_.count(p.cluster_id)) continue;
        const ModelRecord* current = registry_.active_for(p.cluster_id);
        if (p.kind == ModelKind::lite && current) continue;
        const bool fresh = current == nullptr;
        if (p.kind == ModelKind::specialized && current && current->kind == ModelKind::lite) {
            ++replacements_[p.cluster_id];
        }

        ModelRecord r;
        r.cluster_id = p.cluster_id;
        r.kind = p.kind;
        r.predictor = std::move(model);
        r.meta.sample_count = p.sample_count;
        r.meta.label_source = p.kind == ModelKind::lite ? LabelSource::teacher : LabelSource::oracle;
        r.meta.seed = p.seed;
        r.meta.trained_at = index;
        registry_.add(std::move(r));
        clusters_[p.cluster_id].update_buffer.clear();

        ManagerEvent ev;
        ev.type = EventType::model;
        ev.cluster_id = p.cluster_id;
        ev.sample_index = index;
        ev.kind = p.kind;
        ev.sample_count = p.sample_count;
        out.push_back(ev);

        if (fresh) {
            if (auto evicted = evict_if_over_limit(registry_, member_counts(), p.cluster_id)) {
                dormant_.insert(evicted->cluster_id);
                clusters_[evicted->cluster_id].update_buffer.clear();
                ManagerEvent e;
                e.type = EventType::evict;
                e.cluster_id = evicted->cluster_id;
                e.sample_index = index;
                e.member_count = evicted->member_count;
                out.push_back(e);
            }
        }
    }
    pending_ = std::move(keep);
}

void Manager::deliver_labels(std::uint64_t index) {
    std::vector<std::uint64_t> touched;
    while (!arrivals_.empty() && arrivals_.front().available_at <= index) {
        std::pop_heap(arrivals_.begin(), arrivals_.end(), std::greater<>{});
        const auto a = arrivals_.back();
        arrivals_.pop_back();
        auto& c = clusters_[a.cluster_id];
        ++c.arrived_labels;
        const auto* rec = registry_.active_for(a.cluster_id);
        if (rec && rec->kind == ModelKind::specialized) c.update_buffer.push_back(a.position);
        touched.push_back(a.cluster_id);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (auto id : touched) {
        maybe_trigger_specialized(id, index);
        flush_updates(id);
    }
}

void Manager::maybe_trigger_specialized(std::uint64_t cluster_id, std::uint64_t index) {
    auto& c = clusters_[cluster_id];
    if (c.specialized_triggered || dormant_.count(cluster_id) || c.arrived_labels < config_.min_train_size) return;
    std::vector<Vector> xs;
    std::vector<std::size_t> labels;
    for (const auto& m : c.members) {
        if (m.label && m.available_at <= index) {
            xs.push_back(m.x);
            labels.push_back(*m.label);
        }
    }
    c.specialized_triggered = true;
    schedule(cluster_id, ModelKind::specialized, std::move(xs), std::move(labels), index);
}

void Manager::flush_updates(std::uint64_t cluster_id) {
    auto& c = clusters_[cluster_id];
    if (c.update_buffer.size() < config_.update_interval) return;
    ModelRecord* rec = registry_.mutable_active_for(cluster_id);
    if (!rec || dormant_.count(cluster_id)) {
        c.update_buffer.clear();
        return;
    }
    std::vector<Vector> xs;
    std::vector<std::size_t> labels;
    const auto* t = teacher();
    for (auto pos : c.update_buffer) {
        const auto& m = c.members[pos];
        if (rec->kind == ModelKind::specialized) {
            xs.push_back(m.x);
            labels.push_back(*m.label);
        } else if (t) {
            xs.push_back(m.x);
            labels.push_back(t->predictor.predict(m.x));
        }
    }
    c.update_buffer.clear();
    update_model(*rec, xs, labels, config_);
    ++update_count_;
}

void Manager::on_inlier(std::uint64_t cluster_id, const LabeledSample& sample, std::uint64_t index) {
    auto& c = clusters_[cluster_id];
    const std::size_t pos = c.members.size();
    c.members.push_back(sample);
    if (dormant_.count(cluster_id)) return;
    const auto* rec = registry_.active_for(cluster_id);
    if (sample.label) {
        if (sample.available_at <= index) {
            ++c.arrived_labels;
            if (rec && rec->kind == ModelKind::specialized) c.update_buffer.push_back(pos);
        } else {
            arrivals_.push_back({sample.available_at, cluster_id, pos});
            std::push_heap(arrivals_.begin(), arrivals_.end(), std::greater<>{});
        }
    }
    if (rec && rec->kind == ModelKind::lite) c.update_buffer.push_back(pos);
    maybe_trigger_specialized(cluster_id, index);
    flush_updates(cluster_id);
}

void Manager::on_promotion(const detector::DriftEvent& ev, std::uint64_t index, std::vector<ManagerEvent>& out) {
    auto& c = clusters_[ev.cluster_id];
    for (auto s : ev.member_samples) {
        auto it = temporary_.find(s);
        if (it == temporary_.end()) throw StateError("promoted member " + std::to_string(s) + " has no stored sample");
        const std::size_t pos = c.members.size();
        c.members.push_back(std::move(it->second));
        const auto& m = c.members.back();
        if (!m.label) continue;
        if (m.available_at <= index) {
            ++c.arrived_labels;
        } else {
            arrivals_.push_back({m.available_at, ev.cluster_id, pos});
            std::push_heap(arrivals_.begin(), arrivals_.end(), std::greater<>{});
        }
    }
    temporary_.clear();

    ManagerEvent d;
    d.type = EventType::drift;
    d.cluster_id = ev.cluster_id;
    d.sample_index = ev.sample_index;
    d.member_count = ev.member_count;
    out.push_back(d);

    if (c.arrived_labels >= config_.min_train_size) {
        maybe_trigger_specialized(ev.cluster_id, index);
    } else if (teacher()) {
        std::vector<Vector> xs;
        xs.reserve(c.members.size());
        for (const auto& m : c.members) xs.push_back(m.x);
        schedule(ev.cluster_id, ModelKind::lite, std::move(xs), {}, index);
    }
}

HandleResult Manager::handle(const LabeledSample& sample) {
    check_sample(sample);
    const auto index = sample.index;
    HandleResult result;
    publish_due(index, false, result.events);

    if (config_.detection_enabled) {
        deliver_labels(index);
        result.observation = detector_.observe(index, sample.z);
        const auto& obs = result.observation;
        if (!obs.assignment.temporary) {
            for (auto id : obs.assignment.clusters) on_inlier(id, sample, index);
        } else {
            temporary_.emplace(index, sample);
            if (obs.screening) {
                for (const auto& [s, cluster] : obs.screening->absorbed) {
                    auto it = temporary_.find(s);
                    if (it == temporary_.end()) continue;
                    on_inlier(cluster, it->second, index);
                    temporary_.erase(it);
                }
                if (!obs.drift) {
                    const auto& keep = detector_.temporary().member_samples;
                    std::set<std::uint64_t> alive(keep.begin(), keep.end());
                    std::erase_if(temporary_, [&](const auto& kv) { return !alive.count(kv.first); });
                }
            }
            if (obs.drift) on_promotion(*obs.drift, index, result.events);
        }
    }

    const auto cands = candidates();
    if (cands.empty()) {
        const auto* t = teacher();
        if (!t) throw StateError("no model available for prediction");
        result.prediction = t->predictor.predict(sample.x);
    } else {
        auto decision = selector::select(config_.policy, sample.z, cands, config_.k);
        result.prediction = selector::ensemble_predict(decision, sample.x, [this](std::uint64_t id) {
            const auto* r = registry_.get(id);
            return r ? &r->predictor : nullptr;
        });
        result.decision = std::move(decision);
    }
    events_.insert(events_.end(), result.events.begin(), result.events.end());
    return result;
}

std::vector<ManagerEvent> Manager::finish(std::uint64_t index) {
    std::vector<ManagerEvent> out;
    publish_due(index, true, out);
    events_.insert(events_.end(), out.begin(), out.end());
    return out;
}

std::vector<selector::Candidate> Manager::candidates() const {
    std::vector<selector::Candidate> out;
    if (!config_.detection_enabled) return out;
    for (const auto& [cluster, model] : registry_.cluster_index()) {
        if (cluster == kGlobalCluster) continue;
        const auto* c = detector_.find(cluster);
        if (!c) continue;
        selector::Candidate cand;
        cand.model_id = model;
        cand.cluster_id = cluster;
        cand.centroid = c->geometry.centroid;
        cand.radius_scale = c->geometry.radius_scale;
        cand.band = c->geometry.band;
        out.push_back(std::move(cand));
    }
    return out;
}

std::size_t Manager::predict(std::span<const double> x, std::span<const double> z, selector::Policy policy) const {
    const auto cands = candidates();
    if (cands.empty()) {
        const auto* t = teacher();
        if (!t) throw StateError("no model available for prediction");
        return t->predictor.predict(x);
    }
    const auto decision = selector::select(policy, z, cands, config_.k);
    return selector::ensemble_predict(decision, x, [this](std::uint64_t id) {
        const auto* r = registry_.get(id);
        return r ? &r->predictor : nullptr;
    });
}

std::vector<LabeledSample> Manager::cluster_members(std::uint64_t cluster_id) const {
    auto it = clusters_.find(cluster_id);
    return it == clusters_.end() ? std::vector<LabeledSample>{} : it->second.members;
}

}  // namespace odrift::manager
