#include "odrift/error.hpp"
#include "odrift/filter.hpp"
#include "odrift/metrics.hpp"
#include "odrift/pipeline.hpp"
#include "odrift/query.hpp"
#include "odrift/scenario.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <memory>

using namespace odrift;

namespace {

struct Run {
    scenario::ScenarioSpec spec;
    pipeline::PipelineConfig config;
    pipeline::RunResult result;
    std::vector<stream::StreamItem> stream;
};

// Full default scenario per mode, computed once.
const Run& run_mode(const std::string& mode) {
    static std::map<std::string, std::unique_ptr<Run>> cache;
    auto& slot = cache[mode];
    if (!slot) {
        slot = std::make_unique<Run>();
        config::Config cfg;
        cfg.set("mode", mode);
        slot->spec = scenario::ScenarioSpec::from_config(cfg);
        slot->config = pipeline::PipelineConfig::from_config(cfg, slot->spec);
        scenario::Scenario sc(slot->spec);
        slot->result = pipeline::run_scenario(sc, slot->config, pipeline::Encoder{});
        slot->stream = sc.generate();
    }
    return *slot;
}

std::vector<manager::ManagerEvent> of_type(const std::vector<manager::ManagerEvent>& evs, manager::EventType t) {
    std::vector<manager::ManagerEvent> out;
    std::copy_if(evs.begin(), evs.end(), std::back_inserter(out), [&](const auto& e) { return e.type == t; });
    return out;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("single stage draws from one source") {
    config::Config cfg;
    cfg.set("stages", "0");
    cfg.set("total", "500");
    const scenario::Scenario sc(scenario::ScenarioSpec::from_config(cfg));
    for (const auto& it : sc.generate()) CHECK(*it.source == 0);
}

TEST_CASE("items only come from admitted sources") {
    const scenario::Scenario sc(scenario::ScenarioSpec{});
    const auto items = sc.generate();
    REQUIRE(items.size() == sc.spec().total);
    std::map<std::size_t, std::uint64_t> first_seen;
    for (const auto& it : items) {
        const auto pool = sc.pool_at(it.index);
        CHECK(std::find(pool.begin(), pool.end(), *it.source) != pool.end());
        first_seen.emplace(*it.source, it.index);
        CHECK(*it.label == sc.label_of(*it.source, it.x));
        CHECK(it.available_at == it.index + sc.spec().label_delay);
        for (double v : it.x) CHECK((v >= 0.0 && v <= 1.0));
    }
    // Every stage's source shows up soon after it is admitted.
    for (const auto& st : sc.spec().stages) {
        REQUIRE(first_seen.count(st.sources.front()));
        CHECK(first_seen[st.sources.front()] >= st.start);
        CHECK(first_seen[st.sources.front()] < st.start + 50);
    }
    CHECK(sc.stage_of(1999) == 0);
    CHECK(sc.stage_of(2000) == 1);
    CHECK(sc.stage_of(9999) == 3);
}

TEST_CASE("generation is deterministic per seed") {
    scenario::ScenarioSpec spec;
    spec.total = 300;
    const auto a = scenario::Scenario(spec).generate();
    const auto b = scenario::Scenario(spec).generate();
    spec.seed += 1;
    const auto c = scenario::Scenario(spec).generate();
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        all_same = all_same && a[i].x == b[i].x && a[i].label == b[i].label;
        any_diff = any_diff || a[i].x != c[i].x;
    }
    CHECK(all_same);
    CHECK(any_diff);
    const scenario::Scenario sc(spec);
    CHECK(sc.draw(1, 20, 3)[7].x == sc.draw(1, 20, 3)[7].x);
}

TEST_CASE("spec validation") {
    scenario::ScenarioSpec s;
    s.stages = {{5, {0}}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.stages = {{0, {0}}, {100, {0}}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.class_count = 5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = {};
    s.source_count = 20;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("pipeline") {

TEST_CASE("windowed accuracy partitions the input") {
    const std::vector<std::uint8_t> c{1, 1, 0, 0, 1, 1, 1};
    const auto w = metrics::windowed_accuracy(c, 3);
    REQUIRE(w.size() == 3);
    CHECK(w[0] == doctest::Approx(2.0 / 3.0));
    CHECK(w[1] == doctest::Approx(2.0 / 3.0));
    CHECK(w[2] == 1.0);
    CHECK(metrics::accuracy(c) == doctest::Approx(5.0 / 7.0));
    CHECK_THROWS_AS(metrics::windowed_accuracy(c, 0), PreconditionError);
}

TEST_CASE("drift scoring") {
    // 4/5 is exactly the purity bar; the repeat of source 1 and the 50/50 mix miss.
    const auto s = metrics::score_drift({{0, 0, 0, 0, 1}, {1, 1}, {1, 1, 1}, {2, 3}}, 4);
    CHECK(s.promotions == 4);
    CHECK(s.true_positives == 2);
    CHECK(s.precision == 0.5);
    CHECK(s.recall == 0.5);
    CHECK(s.f1 == 0.5);
    CHECK(metrics::score_drift({{0, 0, 0, 1}}, 1).true_positives == 0);
    CHECK(metrics::score_drift({}, 3).f1 == 0.0);
}

TEST_CASE("query accuracy") {
    CHECK(metrics::query_accuracy(0, 0) == 1.0);
    CHECK(metrics::query_accuracy(3, 0) == 0.0);
    CHECK(metrics::query_accuracy(90, 100) == doctest::Approx(0.9));
    CHECK(metrics::query_accuracy(300, 100) == 0.0);
}

TEST_CASE("mode names and config keys") {
    for (auto m : {pipeline::RunMode::baseline, pipeline::RunMode::delta_bm, pipeline::RunMode::delta_bm_limited}) {
        CHECK(pipeline::parse_mode(pipeline::to_string(m)) == m);
    }
    CHECK_THROWS_AS(pipeline::parse_mode("fast"), ConfigError);
    CHECK(pipeline::known_config_keys().count("delta"));
    CHECK(pipeline::known_config_keys().count("seed"));
}

TEST_CASE("baseline never detects drift") {
    const auto& r = run_mode("baseline").result;
    CHECK(r.promotions.empty());
    CHECK(of_type(r.events, manager::EventType::drift).empty());
    CHECK(r.peak_model_count == 1);
    CHECK(r.predictions.size() == run_mode("baseline").spec.total);
}

TEST_CASE("delta-bm detects each source once, in order") {
    const auto& run = run_mode("delta-bm");
    const auto& r = run.result;
    const auto drifts = of_type(r.events, manager::EventType::drift);
    REQUIRE(drifts.size() == 4);
    REQUIRE(r.promotions.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.promotions[i].majority_source == i);
        CHECK(r.promotions[i].purity >= 0.95);
        CHECK(drifts[i].sample_index >= run.spec.stages[i].start);
        if (i + 1 < 4) CHECK(drifts[i].sample_index < run.spec.stages[i + 1].start);
    }
    CHECK(r.drift.f1 == 1.0);
    CHECK(r.assignment_accuracy > 0.99);
    CHECK(r.accuracy > run_mode("baseline").result.accuracy + 0.1);

    // Windows partition the stream.
    const auto& w = r.window_accuracy;
    CHECK(w.size() == (run.spec.total + run.config.window - 1) / run.config.window);
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const std::size_t len = std::min<std::size_t>(run.config.window, run.spec.total - i * run.config.window);
        sum += w[i] * static_cast<double>(len);
    }
    CHECK(sum / static_cast<double>(run.spec.total) == doctest::Approx(r.accuracy).epsilon(1e-12));
}

TEST_CASE("limited mode caps cluster models and evicts the smallest") {
    const auto& run = run_mode("delta-bm-limited");
    const auto& r = run.result;
    CHECK(r.peak_model_count <= run.config.max_models);
    CHECK(r.peak_model_count == 3);
    const auto evicts = of_type(r.events, manager::EventType::evict);
    REQUIRE(evicts.size() == 1);
    CHECK(r.manager->registry().cluster_model_count() <= run.config.max_models);
    // The evicted cluster had the fewest members among those with models then.
    const auto drifts = of_type(r.events, manager::EventType::drift);
    REQUIRE(drifts.size() == 4);
    CHECK(evicts[0].cluster_id != drifts.back().cluster_id);
    CHECK(r.manager->dormant().count(evicts[0].cluster_id));
}

TEST_CASE("metrics json carries the headline fields") {
    const auto& run = run_mode("delta-bm");
    const auto j = pipeline::metrics_to_json(run.result, run.config);
    for (const char* key : {"accuracy", "window_accuracy", "assignment_accuracy", "peak_model_count"}) {
        CHECK(j.find(key) != std::string::npos);
    }
}

}  // TEST_SUITE

TEST_SUITE("query") {

TEST_CASE("filter mode names") {
    for (auto m : {query::FilterMode::no_filter, query::FilterMode::specialized_filter,
                   query::FilterMode::global_filter}) {
        CHECK(query::parse_filter_mode(query::to_string(m)) == m);
    }
    CHECK_THROWS_AS(query::parse_filter_mode("none"), ConfigError);
}

TEST_CASE("gated query with no positives") {
    const auto& run = run_mode("delta-bm");
    std::vector<stream::StreamItem> seg(run.stream.begin() + 9000, run.stream.begin() + 9200);
    for (auto& it : seg) it.label = 1;
    query::FilterBank bank;
    filter::FilterModel closed;
    closed.degenerate = true;
    closed.constant_pass = false;
    bank.global = closed;
    const auto q = query::aggregation_query(seg, pipeline::Encoder{}, *run.result.manager, 0,
                                            query::FilterMode::global_filter, bank);
    CHECK(q.count == 0);
    CHECK(q.true_count == 0);
    CHECK(q.accuracy == 1.0);
    CHECK(q.reduction == 1.0);
    CHECK(q.model_invocations == 0);
}

TEST_CASE("audit reconciles filtered and unfiltered counts") {
    const auto& run = run_mode("delta-bm");
    const auto& mgr = *run.result.manager;
    std::vector<stream::StreamItem> seg(run.stream.begin() + 8000, run.stream.end());
    const auto warm = scenario::Scenario(run.spec).draw(0, run.config.warmup, run.spec.seed + 1);
    for (std::size_t t = 0; t < run.spec.class_count; ++t) {
        const auto bank = query::build_filters(mgr, t, warm, filter::FilterTrainConfig{});
        const auto none = query::aggregation_query(seg, pipeline::Encoder{}, mgr, t, query::FilterMode::no_filter, bank);
        CHECK(none.reduction == 0.0);
        CHECK(none.model_invocations == none.items);
        for (auto m : {query::FilterMode::specialized_filter, query::FilterMode::global_filter}) {
            const auto q = query::aggregation_query(seg, pipeline::Encoder{}, mgr, t, m, bank);
            CHECK(q.true_count == none.true_count);
            CHECK(none.count - q.count == q.filter_false_negatives);
            CHECK(q.items - q.model_invocations ==
                  static_cast<std::uint64_t>(std::count_if(q.audit.begin(), q.audit.end(),
                                                           [](const auto& a) { return !a.gate_passed; })));
        }
        const auto spec_q =
            query::aggregation_query(seg, pipeline::Encoder{}, mgr, t, query::FilterMode::specialized_filter, bank);
        const auto glob_q =
            query::aggregation_query(seg, pipeline::Encoder{}, mgr, t, query::FilterMode::global_filter, bank);
        CHECK(spec_q.accuracy >= glob_q.accuracy);
    }
}

TEST_CASE("unknown class is a query error") {
    const auto& run = run_mode("delta-bm");
    const auto& mgr = *run.result.manager;
    const std::vector<stream::StreamItem> seg(run.stream.begin(), run.stream.begin() + 10);
    CHECK_THROWS_AS(query::build_filters(mgr, 9, {}, filter::FilterTrainConfig{}), QueryError);
    CHECK_THROWS_AS(query::aggregation_query(seg, pipeline::Encoder{}, mgr, 9, query::FilterMode::no_filter, {}),
                    QueryError);
    CHECK_THROWS_AS(query::aggregation_query(seg, pipeline::Encoder{}, mgr, 0, query::FilterMode::global_filter, {}),
                    QueryError);
}

TEST_CASE("single-class training data gives a constant gate") {
    const std::vector<nn::Vector> xs{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
    const auto pos = filter::train_filter(xs, std::vector<std::size_t>{2, 2, 2}, 2, filter::FilterTrainConfig{});
    CHECK(pos.degenerate);
    CHECK(pos.pass(xs[0]));
    const auto neg = filter::train_filter(xs, std::vector<std::size_t>{1, 1, 1}, 2, filter::FilterTrainConfig{});
    CHECK(neg.degenerate);
    CHECK_FALSE(neg.pass(xs[0]));
    CHECK_THROWS_AS(filter::train_filter({}, {}, 0, filter::FilterTrainConfig{}), PreconditionError);
}

TEST_CASE("filter on separable data keeps recall and is smaller than the task model") {
    nn::Rng rng(4);
    std::normal_distribution<double> g(0.0, 0.2);
    std::vector<nn::Vector> xs;
    std::vector<std::size_t> ys;
    for (std::size_t i = 0; i < 1200; ++i) {
        const std::size_t y = i % 3;
        xs.push_back({static_cast<double>(y) + g(rng), g(rng), g(rng), g(rng)});
        ys.push_back(y);
    }
    const auto f = filter::train_filter(xs, ys, 1, filter::FilterTrainConfig{});
    CHECK_FALSE(f.degenerate);
    CHECK(filter::filter_recall(f, xs, ys) >= 0.95);
    std::size_t passed_negatives = 0, negatives = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (ys[i] == 1) continue;
        ++negatives;
        passed_negatives += f.pass(xs[i]);
    }
    CHECK(passed_negatives < negatives / 2);
    CHECK(f.param_count() < run_mode("delta-bm").result.manager->teacher()->predictor.network().param_count());
}

}  // TEST_SUITE
