#include "odrift/error.hpp"
#include "odrift/manager.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace odrift;
using namespace odrift::manager;

namespace {

constexpr std::size_t kDim = 4;

ManagerConfig small_config() {
    ManagerConfig c;
    c.input_dim = kDim;
    c.class_count = 2;
    c.teacher_hidden = {32, 16};
    c.student_hidden = {8};
    c.train.epochs = 20;
    return c;
}

// Label rule: sign of the first coordinate relative to the blob center.
std::size_t label_of(const Vector& x, const Vector& center) { return x[0] > center[0] ? 1 : 0; }

std::vector<LabeledSample> blob_stream(std::size_t n, const Vector& center, std::uint64_t first, std::uint64_t delay,
                                       nn::Rng& rng) {
    std::vector<LabeledSample> out;
    for (auto& x : testing::blob(n, center, 1.0, rng)) {
        LabeledSample s;
        s.index = first + out.size();
        s.label = label_of(x, center);
        s.available_at = s.index + delay;
        s.z = x;
        s.x = std::move(x);
        out.push_back(std::move(s));
    }
    return out;
}

task::Classifier train_teacher(const ManagerConfig& cfg, const std::vector<LabeledSample>& data) {
    std::vector<Vector> xs;
    std::vector<std::size_t> ys;
    for (const auto& s : data) {
        xs.push_back(s.x);
        ys.push_back(*s.label);
    }
    auto t = task::Classifier::make(cfg.input_dim, cfg.teacher_hidden, cfg.class_count, 3);
    t.train(xs, ys, cfg.train);
    return t;
}

ModelRecord record(std::uint64_t cluster, ModelKind kind, std::uint64_t seed = 1) {
    ModelRecord r;
    r.cluster_id = cluster;
    r.kind = kind;
    r.predictor = task::Classifier::make(kDim, std::vector<std::size_t>{4}, 2, seed);
    r.meta.seed = seed;
    r.meta.label_source = kind == ModelKind::lite ? LabelSource::teacher : LabelSource::oracle;
    return r;
}

Vector center(double offset) {
    Vector c(kDim, 0.0);
    c[1] = offset;
    return c;
}

}  // namespace

TEST_SUITE("manager") {

TEST_CASE("eviction picks the smallest cluster") {
    ModelRegistry reg(3);
    for (std::uint64_t c = 1; c <= 4; ++c) reg.add(record(c, ModelKind::specialized));
    const std::map<std::uint64_t, std::uint64_t> counts{{1, 20000}, {2, 40000}, {3, 5000}, {4, 6000}};
    const auto ev = evict_if_over_limit(reg, counts);
    REQUIRE(ev);
    CHECK(ev->cluster_id == 3);
    CHECK(ev->member_count == 5000);
    CHECK(reg.active_for(3) == nullptr);
    CHECK(reg.cluster_model_count() == 3);
    CHECK_FALSE(evict_if_over_limit(reg, counts));
}

TEST_CASE("eviction honours the exclusion and ties") {
    ModelRegistry reg(2);
    for (std::uint64_t c = 1; c <= 3; ++c) reg.add(record(c, ModelKind::lite));
    const std::map<std::uint64_t, std::uint64_t> counts{{1, 50}, {2, 50}, {3, 10}};
    const auto ev = evict_if_over_limit(reg, counts, 3);
    REQUIRE(ev);
    CHECK(ev->cluster_id == 1);
}

TEST_CASE("no limit means no eviction") {
    ModelRegistry reg;
    for (std::uint64_t c = 1; c <= 8; ++c) reg.add(record(c, ModelKind::lite));
    CHECK_FALSE(evict_if_over_limit(reg, {}));
}

TEST_CASE("global model is not counted against the limit") {
    ModelRegistry reg(1);
    reg.add(record(kGlobalCluster, ModelKind::global));
    reg.add(record(1, ModelKind::lite));
    CHECK(reg.cluster_model_count() == 1);
    CHECK_FALSE(evict_if_over_limit(reg, {{1, 5}}));
}

TEST_CASE("replacing a cluster model archives the old record") {
    ModelRegistry reg;
    const auto lite = reg.add(record(7, ModelKind::lite));
    const auto spec = reg.add(record(7, ModelKind::specialized));
    CHECK(lite != spec);
    CHECK(reg.cluster_index().at(7) == spec);
    CHECK(reg.active_for(7)->kind == ModelKind::specialized);
    REQUIRE(reg.archived().size() == 1);
    CHECK(reg.archived()[0].model_id == lite);
    CHECK(reg.get(lite) == nullptr);
}

TEST_CASE("registry snapshot round-trip and truncation") {
    ModelRegistry reg(3);
    reg.add(record(kGlobalCluster, ModelKind::global, 1));
    reg.add(record(1, ModelKind::lite, 2));
    reg.add(record(1, ModelKind::specialized, 3));
    reg.add(record(2, ModelKind::lite, 4));
    const auto bytes = reg.snapshot();
    const auto back = ModelRegistry::restore(bytes);
    CHECK(back.snapshot() == bytes);
    CHECK(back.cluster_index() == reg.cluster_index());
    CHECK(back.archived().size() == 1);
    CHECK(back.max_models() == reg.max_models());
    CHECK(back.active_for(1)->predictor.network().same_parameters(
        testing::rounded_to_f32(reg.active_for(1)->predictor.network())));
    for (std::size_t cut : {std::size_t{0}, std::size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
        CHECK_THROWS_AS(ModelRegistry::restore(std::span(bytes.data(), cut)), FormatError);
    }
}

TEST_CASE("single-class cluster gives a constant specialized model") {
    nn::Rng rng(1);
    const auto cfg = small_config();
    const auto xs = testing::blob(100, center(0.0), 1.0, rng);
    const std::vector<std::size_t> labels(xs.size(), 0);
    const auto m = generate_specialized(xs, labels, cfg, 5);
    for (const auto& x : xs) CHECK(m.predict(x) == 0);
}

TEST_CASE("separable cluster trains to high accuracy") {
    nn::Rng rng(2);
    const auto cfg = small_config();
    const auto xs = testing::blob(300, center(0.0), 1.0, rng);
    std::vector<std::size_t> labels;
    for (const auto& x : xs) labels.push_back(label_of(x, center(0.0)));
    const auto m = generate_specialized(xs, labels, cfg, 5);
    CHECK(m.accuracy(xs, labels) >= 0.95);
}

TEST_CASE("lite models follow their teacher") {
    nn::Rng rng(3);
    auto cfg = small_config();
    const auto data = blob_stream(600, center(0.0), 0, 0, rng);
    const auto teacher = train_teacher(cfg, data);
    std::vector<Vector> xs, held;
    for (std::size_t i = 0; i < data.size(); ++i) (i < 400 ? xs : held).push_back(data[i].x);
    const auto student = generate_lite(xs, &teacher, cfg, 9);
    CHECK(student.param_count() < teacher.param_count());
    std::size_t agree = 0;
    for (const auto& x : held) agree += student.predict(x) == teacher.predict(x);
    CHECK(static_cast<double>(agree) / static_cast<double>(held.size()) >= 0.9);

    nn::Rng init(1);
    auto net = nn::Network::dense({kDim, 32, 2}, {nn::Activation::relu, nn::Activation::identity}, init);
    auto& last = net.mutable_layers().back();
    std::fill(last.weights.data.begin(), last.weights.data.end(), 0.0);
    last.bias = {-1.0, 1.0};
    const task::Classifier constant(std::move(net), 2);
    const auto follower = generate_lite(xs, &constant, cfg, 9);
    for (const auto& x : held) CHECK(follower.predict(x) == 1);

    CHECK_THROWS_AS(generate_lite(xs, nullptr, cfg, 9), StateError);
    cfg.student_hidden = {512};
    CHECK_THROWS_AS(generate_lite(xs, &teacher, cfg, 9), PreconditionError);
}

TEST_CASE("model updates") {
    nn::Rng rng(4);
    const auto cfg = small_config();
    auto make_set = [&](std::size_t n, std::vector<std::size_t>& ys) {
        auto xs = testing::blob(n, center(0.0), 1.0, rng);
        for (const auto& x : xs) ys.push_back(label_of(x, center(0.0)));
        return xs;
    };
    std::vector<std::size_t> ys0, ys1, ysh;
    const auto x0 = make_set(300, ys0);
    const auto x1 = make_set(500, ys1);
    const auto xh = make_set(500, ysh);

    ModelRecord r;
    r.model_id = 11;
    r.cluster_id = 2;
    r.kind = ModelKind::specialized;
    r.predictor = generate_specialized(x0, ys0, cfg, 3);
    const auto before = r.predictor.accuracy(xh, ysh);

    const auto snapshot = r.predictor.network();
    update_model(r, std::vector<Vector>{}, std::vector<std::size_t>{}, cfg);
    CHECK(r.predictor.network().same_parameters(snapshot));
    CHECK(r.meta.updates == 0);

    update_model(r, x1, ys1, cfg);
    CHECK(r.model_id == 11);
    CHECK(r.kind == ModelKind::specialized);
    CHECK(r.meta.updates == 1);
    CHECK(r.predictor.accuracy(xh, ysh) >= before - 0.02);
}

TEST_CASE("inliers grow their cluster and outliers grow the temporary cluster") {
    nn::Rng rng(5);
    auto cfg = small_config();
    cfg.training_latency = 0;
    Manager mgr(cfg, detector::DetectorParams{}, kDim);
    const auto warm = blob_stream(400, center(0.0), 0, 0, rng);
    mgr.set_teacher(train_teacher(cfg, warm));

    auto stream = blob_stream(2000, center(0.0), 0, 100, rng);
    std::uint64_t idx = 0;
    for (const auto& s : stream) {
        mgr.handle(s);
        idx = s.index + 1;
    }
    REQUIRE(mgr.detector().permanents().size() == 1);
    const auto& c = mgr.detector().permanents().front();
    const auto models = mgr.registry().records().size();

    // A point inside the band.
    LabeledSample in;
    in.index = idx++;
    in.x = c.geometry.centroid;
    in.x[0] += c.geometry.radius_scale * (c.geometry.band.lower + c.geometry.band.upper) / 2.0;
    in.z = in.x;
    const auto count = c.member_count();
    auto r = mgr.handle(in);
    CHECK_FALSE(r.observation.assignment.temporary);
    CHECK(mgr.detector().permanents().front().member_count() == count + 1);
    CHECK(mgr.registry().records().size() == models);

    // A point far outside every band.
    LabeledSample out = in;
    out.index = idx++;
    out.x = center(50.0);
    out.z = out.x;
    const auto temp = mgr.detector().temporary().member_count();
    r = mgr.handle(out);
    CHECK(r.observation.assignment.temporary);
    CHECK_FALSE(r.observation.drift);
    CHECK(mgr.detector().temporary().member_count() == temp + 1);
    CHECK(mgr.registry().records().size() == models);
}

TEST_CASE("two-blob stream: one lite model per promotion, then one replacement each") {
    nn::Rng rng(6);
    auto cfg = small_config();
    cfg.min_train_size = 150;
    Manager mgr(cfg, detector::DetectorParams{}, kDim);
    mgr.set_teacher(train_teacher(cfg, blob_stream(400, center(0.0), 0, 0, rng)));

    auto a = blob_stream(3000, center(0.0), 0, 300, rng);
    auto b = blob_stream(3000, center(15.0), 3000, 300, rng);
    for (const auto& s : a) mgr.handle(s);
    for (const auto& s : b) mgr.handle(s);
    mgr.finish(6000);

    std::size_t drifts = 0, lites = 0, specialized = 0;
    for (const auto& e : mgr.events()) {
        drifts += e.type == EventType::drift;
        lites += e.type == EventType::model && e.kind == ModelKind::lite;
        specialized += e.type == EventType::model && e.kind == ModelKind::specialized;
    }
    CHECK(drifts == 2);
    CHECK(lites == 2);
    CHECK(specialized == 2);
    REQUIRE(mgr.replacements().size() == 2);
    for (const auto& [cluster, n] : mgr.replacements()) {
        CHECK(n == 1);
        CHECK(mgr.registry().active_for(cluster)->kind == ModelKind::specialized);
    }
    CHECK(mgr.registry().archived().size() == 2);
}

TEST_CASE("evicted clusters fall back to the remaining models") {
    nn::Rng rng(7);
    auto cfg = small_config();
    cfg.max_models = 1;
    cfg.training_latency = 0;
    Manager mgr(cfg, detector::DetectorParams{}, kDim);
    mgr.set_teacher(train_teacher(cfg, blob_stream(400, center(0.0), 0, 0, rng)));
    for (const auto& s : blob_stream(1500, center(0.0), 0, 100, rng)) mgr.handle(s);
    for (const auto& s : blob_stream(1500, center(15.0), 1500, 100, rng)) mgr.handle(s);
    mgr.finish(3000);
    REQUIRE(mgr.detector().permanents().size() == 2);
    CHECK(mgr.registry().cluster_model_count() == 1);
    REQUIRE(mgr.dormant().size() == 1);
    const auto gone = *mgr.dormant().begin();
    CHECK(mgr.registry().active_for(gone) == nullptr);
    CHECK_FALSE(mgr.cluster_members(gone).empty());

    const auto* dormant = mgr.detector().find(gone);
    REQUIRE(dormant);
    std::uint64_t idx = 3000;
    for (const auto& z : testing::blob(50, dormant->geometry.centroid, 1.0, rng)) {
        LabeledSample s;
        s.index = idx++;
        s.x = z;
        s.z = z;
        const auto r = mgr.handle(s);
        REQUIRE(r.decision);
        for (const auto& [model, w] : r.decision->entries) CHECK(mgr.registry().get(model) != nullptr);
    }
}

TEST_CASE("malformed samples are rejected") {
    Manager mgr(small_config(), detector::DetectorParams{}, kDim);
    LabeledSample s;
    s.x = Vector(kDim, 0.0);
    s.z = Vector(kDim, 0.0);
    CHECK_THROWS_AS(mgr.handle(s), StateError);  // no model at all yet
    s.x.pop_back();
    CHECK_THROWS_AS(mgr.handle(s), StructuralError);
    s.x.push_back(0.0);
    s.label = 5;
    CHECK_THROWS_AS(mgr.handle(s), StructuralError);
}

}  // TEST_SUITE
