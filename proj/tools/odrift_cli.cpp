#include "odrift/config.hpp"
#include "odrift/dagan.hpp"
#include "odrift/detector.hpp"
#include "odrift/error.hpp"
#include "odrift/idx.hpp"
#include "odrift/pipeline.hpp"
#include "odrift/query.hpp"
#include "odrift/scenario.hpp"
#include "odrift/stream_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace odrift;
using json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::runtime: return kExitRuntime;
        case ErrorCategory::usage: return kExitUsage;
        case ErrorCategory::format: return kExitFormat;
    }
    return kExitRuntime;
}

// Outputs are staged and only written once the command has succeeded, each
// through a temporary file and a rename.
class Outputs {
public:
    void add(const std::string& path, std::string content) {
        if (!path.empty()) files_.emplace_back(path, std::move(content));
    }
    void add(const std::string& path, const std::vector<std::uint8_t>& bytes) {
        add(path, std::string(bytes.begin(), bytes.end()));
    }
    void commit() const {
        for (const auto& [path, content] : files_) {
            const std::string tmp = path + ".tmp";
            {
                std::ofstream out(tmp, std::ios::binary);
                if (!out) throw Error("cannot write '" + path + "'");
                out.write(content.data(), static_cast<std::streamsize>(content.size()));
                if (!out) throw Error("short write to '" + path + "'");
            }
            std::filesystem::rename(tmp, path);
        }
    }

private:
    std::vector<std::pair<std::string, std::string>> files_;
};

config::Config load_config(const std::string& path) {
    if (path.empty()) return {};
    return config::Config::load(path);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lines(const std::vector<std::string>& rows) {
    std::string s;
    for (const auto& r : rows) {
        s += r;
        s += '\n';
    }
    return s;
}

// ---- run-scenario ---------------------------------------------------------

struct ScenarioArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string events;
    std::string metrics;
    std::string stream_out;
};

struct PreparedScenario {
    scenario::ScenarioSpec spec;
    pipeline::PipelineConfig pc;
};

PreparedScenario prepare(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& mode) {
    auto cfg = load_config(config_path);
    if (seed) cfg.set("seed", std::to_string(*seed));
    if (!mode.empty()) cfg.set("mode", mode);
    PreparedScenario p;
    p.spec = scenario::ScenarioSpec::from_config(cfg);
    p.pc = pipeline::PipelineConfig::from_config(cfg, p.spec);
    return p;
}

int run_scenario_cmd(const ScenarioArgs& a) {
    const auto p = prepare(a.config, a.seed, a.mode);
    const scenario::Scenario sc(p.spec);
    const auto encoder = pipeline::load_encoder(p.pc.encoder);
    const auto r = pipeline::run_scenario(sc, p.pc, encoder);

    std::vector<std::string> ev;
    for (const auto& e : r.events) ev.push_back(pipeline::event_to_json(e));
    const std::string metrics = pipeline::metrics_to_json(r, p.pc) + "\n";

    Outputs out;
    if (!a.stream_out.empty()) {
        const auto items = sc.generate();
        std::string text;
        for (const auto& it : items) text += stream::to_ndjson_line(it) + "\n";
        out.add(a.stream_out, text);
    }
    if (a.events.empty()) std::cout << lines(ev);
    else out.add(a.events, lines(ev));
    if (a.metrics.empty()) std::cout << metrics;
    else out.add(a.metrics, metrics);
    out.commit();
    return kExitOk;
}

// ---- detect / snapshot / restore -----------------------------------------

struct DetectArgs {
    std::string stream;
    std::string config;
    std::string encoder;
    std::string assignments;
    std::string events;
    std::string snapshot_in;
    std::string snapshot_out;
    std::uint64_t start = 0;
    std::optional<std::uint64_t> count;
};

std::string assignment_json(const detector::Assignment& a) {
    json j;
    j["index"] = a.sample_index;
    j["clusters"] = a.clusters;
    j["temporary"] = a.temporary;
    return j.dump();
}

std::string drift_json(const detector::DriftEvent& e) {
    json j;
    j["type"] = "drift";
    j["cluster_id"] = e.cluster_id;
    j["sample_index"] = e.sample_index;
    j["member_count"] = e.member_count;
    j["band"] = {e.band.lower, e.band.upper};
    return j.dump();
}

std::string screening_json(std::uint64_t index, const detector::ScreeningResult& s) {
    json j;
    j["type"] = "screen";
    j["sample_index"] = index;
    j["absorbed"] = s.absorbed.size();
    j["dropped"] = s.dropped;
    j["cleared"] = s.cleared;
    return j.dump();
}

int detect_cmd(const DetectArgs& a) {
    auto cfg = load_config(a.config);
    const auto spec = scenario::ScenarioSpec::from_config(cfg);
    const auto pc = pipeline::PipelineConfig::from_config(cfg, spec);
    const auto encoder = pipeline::load_encoder(a.encoder.empty() ? pc.encoder : a.encoder);
    const auto items = stream::read_stream(a.stream);
    if (items.empty()) throw PreconditionError("stream '" + a.stream + "' is empty");

    std::optional<detector::Detector> det;
    if (!a.snapshot_in.empty()) {
        det.emplace(detector::Detector::restore(read_bytes(a.snapshot_in)));
    } else {
        det.emplace(pc.detector, encoder.latent_dim(items.front().x.size()));
    }

    std::vector<std::string> assigned, events;
    const std::uint64_t end = a.count ? std::min<std::uint64_t>(a.start + *a.count, items.size()) : items.size();
    for (std::uint64_t i = a.start; i < end; ++i) {
        const auto& item = items[i];
        const auto obs = det->observe(item.index, encoder.encode(item.x));
        assigned.push_back(assignment_json(obs.assignment));
        if (obs.screening) events.push_back(screening_json(item.index, *obs.screening));
        if (obs.drift) events.push_back(drift_json(*obs.drift));
    }

    Outputs out;
    out.add(a.assignments, lines(assigned));
    if (a.events.empty()) std::cout << lines(events);
    else out.add(a.events, lines(events));
    if (!a.snapshot_out.empty()) out.add(a.snapshot_out, det->snapshot());
    out.commit();
    return kExitOk;
}

// ---- query ---------------------------------------------------------------

struct QueryArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t target = 0;
    std::string filter = "all";
    std::optional<std::uint64_t> from;
    std::string out;
};

int query_cmd(const QueryArgs& a) {
    const auto p = prepare(a.config, a.seed, "");
    if (p.pc.mode == pipeline::RunMode::baseline) throw ConfigError("query needs a drift-aware mode");
    if (a.target >= p.spec.class_count) throw QueryError("unknown class " + std::to_string(a.target));
    std::vector<query::FilterMode> modes;
    if (a.filter == "all") {
        modes = {query::FilterMode::no_filter, query::FilterMode::specialized_filter, query::FilterMode::global_filter};
    } else {
        modes = {query::parse_filter_mode(a.filter)};
    }

    const scenario::Scenario sc(p.spec);
    const auto encoder = pipeline::load_encoder(p.pc.encoder);
    const auto r = pipeline::run_scenario(sc, p.pc, encoder);
    const auto warm = sc.draw(0, p.pc.warmup, p.spec.seed + 1);
    const auto bank = query::build_filters(*r.manager, a.target, warm, filter::FilterTrainConfig{});

    const auto stream = sc.generate();
    const std::uint64_t from = a.from.value_or(p.spec.stages.back().start);
    if (from >= stream.size()) throw PreconditionError("query segment is empty");
    const std::span<const stream::StreamItem> segment(stream.begin() + static_cast<std::ptrdiff_t>(from), stream.end());

    json results = json::array();
    for (auto m : modes) {
        const auto q = query::aggregation_query(segment, encoder, *r.manager, a.target, m, bank);
        json j;
        j["filter"] = std::string(query::to_string(m));
        j["target"] = a.target;
        j["count"] = q.count;
        j["true_count"] = q.true_count;
        j["accuracy"] = q.accuracy;
        j["items"] = q.items;
        j["model_invocations"] = q.model_invocations;
        j["reduction"] = q.reduction;
        j["filter_false_negatives"] = q.filter_false_negatives;
        results.push_back(j);
    }
    const std::string text = results.dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        Outputs out;
        out.add(a.out, text);
        out.commit();
    }
    return kExitOk;
}

// ---- train-dagan ---------------------------------------------------------

struct TrainArgs {
    std::string images;
    std::string labels;
    std::string stream;
    std::vector<std::size_t> classes;
    std::size_t limit = 0;
    std::string out;
    std::string report;
    std::size_t epochs = 60;
    std::size_t latent = 32;
    std::vector<std::size_t> hidden = {256, 64};
    double learning_rate = 1e-3;
    double adversarial_learning_rate = 1e-4;
    std::uint64_t seed = 1;
};

int train_dagan_cmd(const TrainArgs& a) {
    if (a.images.empty() == a.stream.empty()) throw ConfigError("give exactly one of --images or --stream");
    std::vector<nn::Vector> data;
    if (!a.images.empty()) {
        auto im = idx::read_images(a.images);
        std::vector<std::uint8_t> labels;
        if (!a.labels.empty()) labels = idx::read_labels(a.labels);
        if (!a.classes.empty() && labels.empty()) throw ConfigError("--classes needs --labels");
        if (!labels.empty() && labels.size() != im.pixels.size()) {
            throw FormatError("label count " + std::to_string(labels.size()) + " does not match image count " +
                              std::to_string(im.pixels.size()));
        }
        for (std::size_t i = 0; i < im.pixels.size(); ++i) {
            if (!a.classes.empty() && std::find(a.classes.begin(), a.classes.end(), labels[i]) == a.classes.end()) {
                continue;
            }
            data.push_back(std::move(im.pixels[i]));
        }
    } else {
        for (auto& it : stream::read_stream(a.stream)) {
            if (!a.classes.empty() && (!it.label || std::find(a.classes.begin(), a.classes.end(), *it.label) == a.classes.end())) {
                continue;
            }
            data.push_back(std::move(it.x));
        }
    }
    if (a.limit && data.size() > a.limit) data.resize(a.limit);
    if (data.empty()) throw PreconditionError("no training samples selected");

    dagan::DaGanConfig c;
    c.input_dim = data.front().size();
    c.latent_dim = a.latent;
    c.hidden = a.hidden;
    c.epochs = a.epochs;
    c.seed = a.seed;
    c.reconstruction_optimizer.learning_rate = a.learning_rate;
    c.adversarial_optimizer.learning_rate = a.adversarial_learning_rate;
    c.adversarial_optimizer.beta1 = 0.5;
    c.disc_optimizer.learning_rate = a.adversarial_learning_rate;
    c.disc_optimizer.beta1 = 0.5;
    c.validate();

    dagan::DaGanModel model(c);
    dagan::DaGanTrainer trainer(model, c);
    json report = json::array();
    for (std::size_t e = 0; e < c.epochs; ++e) {
        const auto reps = trainer.train_epoch(data);
        dagan::TrainReport mean;
        for (const auto& r : reps) {
            mean.loss_z += r.loss_z;
            mean.loss_i += r.loss_i;
            mean.loss_r += r.loss_r;
            mean.combined += r.combined;
        }
        const double n = static_cast<double>(reps.size());
        report.push_back({{"epoch", e},
                          {"loss_z", mean.loss_z / n},
                          {"loss_i", mean.loss_i / n},
                          {"loss_r", mean.loss_r / n},
                          {"combined", mean.combined / n}});
    }

    Outputs out;
    out.add(a.out, model.to_bytes());
    out.add(a.report, report.dump(2) + "\n");
    out.commit();
    std::cout << report.back().dump() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drift-aware stream analytics over latent embeddings"};
    app.require_subcommand(1);

    ScenarioArgs sa;
    auto* run = app.add_subcommand("run-scenario", "Generate the staged scenario and run the pipeline");
    run->add_option("--config", sa.config, "key=value configuration file");
    run->add_option("--seed", sa.seed, "Override the scenario seed");
    run->add_option("--mode", sa.mode, "baseline, delta-bm or delta-bm-limited");
    run->add_option("--events", sa.events, "Event log output (NDJSON); stdout when omitted");
    run->add_option("--metrics", sa.metrics, "Metrics output (JSON); stdout when omitted");
    run->add_option("--stream-out", sa.stream_out, "Also write the generated stream (NDJSON)");

    DetectArgs da;
    auto* det = app.add_subcommand("detect", "Run drift detection over a stream file");
    det->add_option("--stream", da.stream, "NDJSON or ODRF stream")->required();
    det->add_option("--config", da.config, "key=value configuration file");
    det->add_option("--encoder", da.encoder, "identity or a DA-GAN model path");
    det->add_option("--assignments", da.assignments, "Per-item assignment output (NDJSON)");
    det->add_option("--events", da.events, "Event output (NDJSON); stdout when omitted");
    det->add_option("--snapshot-out", da.snapshot_out, "Write the final detector state");
    det->add_option("--start", da.start, "Position of the first stream item to process");
    det->add_option("--count", da.count, "Number of items to process");

    DetectArgs sn;
    auto* snap = app.add_subcommand("snapshot", "Detect over a stream prefix and save the detector state");
    snap->add_option("--stream", sn.stream, "NDJSON or ODRF stream")->required();
    snap->add_option("--count", sn.count, "Number of items to process")->required();
    snap->add_option("--out", sn.snapshot_out, "Snapshot output")->required();
    snap->add_option("--config", sn.config, "key=value configuration file");
    snap->add_option("--encoder", sn.encoder, "identity or a DA-GAN model path");
    snap->add_option("--assignments", sn.assignments, "Per-item assignment output (NDJSON)");
    snap->add_option("--events", sn.events, "Event output (NDJSON); stdout when omitted");

    DetectArgs rs;
    auto* rest = app.add_subcommand("restore", "Resume detection from a saved detector state");
    rest->add_option("--snapshot", rs.snapshot_in, "Snapshot written by 'snapshot'")->required();
    rest->add_option("--stream", rs.stream, "NDJSON or ODRF stream")->required();
    rest->add_option("--start", rs.start, "Position of the first stream item to process")->required();
    rest->add_option("--count", rs.count, "Number of items to process");
    rest->add_option("--encoder", rs.encoder, "identity or a DA-GAN model path");
    rest->add_option("--assignments", rs.assignments, "Per-item assignment output (NDJSON)");
    rest->add_option("--events", rs.events, "Event output (NDJSON); stdout when omitted");
    rest->add_option("--snapshot-out", rs.snapshot_out, "Write the final detector state");

    QueryArgs qa;
    auto* qry = app.add_subcommand("query", "COUNT query over the last scenario stage");
    qry->add_option("--config", qa.config, "key=value configuration file");
    qry->add_option("--seed", qa.seed, "Override the scenario seed");
    qry->add_option("--target", qa.target, "Target class")->required();
    qry->add_option("--filter", qa.filter, "no-filter, specialized-filter, global-filter or all");
    qry->add_option("--from", qa.from, "First stream index of the queried segment");
    qry->add_option("--out", qa.out, "Result output (JSON); stdout when omitted");

    TrainArgs ta;
    auto* trn = app.add_subcommand("train-dagan", "Train a DA-GAN encoder");
    trn->add_option("--images", ta.images, "idx image file");
    trn->add_option("--labels", ta.labels, "idx label file");
    trn->add_option("--stream", ta.stream, "NDJSON or ODRF stream");
    trn->add_option("--classes", ta.classes, "Keep only these labels")->delimiter(',');
    trn->add_option("--limit", ta.limit, "Keep at most this many samples");
    trn->add_option("--out", ta.out, "Model output (ODGN)")->required();
    trn->add_option("--report", ta.report, "Per-epoch loss report (JSON)");
    trn->add_option("--epochs", ta.epochs, "Training epochs")->capture_default_str();
    trn->add_option("--latent", ta.latent, "Latent dimension")->capture_default_str();
    trn->add_option("--hidden", ta.hidden, "Encoder hidden widths, comma separated")->delimiter(',');
    trn->add_option("--lr", ta.learning_rate, "Reconstruction learning rate")->capture_default_str();
    trn->add_option("--adv-lr", ta.adversarial_learning_rate, "Adversarial and discriminator learning rate")
        ->capture_default_str();
    trn->add_option("--seed", ta.seed, "Training seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run) return run_scenario_cmd(sa);
        if (*det) return detect_cmd(da);
        if (*snap) return detect_cmd(sn);
        if (*rest) return detect_cmd(rs);
        if (*qry) return query_cmd(qa);
        if (*trn) return train_dagan_cmd(ta);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
