#include "odrift/dagan.hpp"

#include "odrift/error.hpp"
#include "odrift/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <utility>

namespace odrift::dagan {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

nn::Network build(std::vector<std::size_t> dims, nn::Activation hidden, nn::Activation out, nn::Rng& rng) {
    std::vector<nn::Activation> acts(dims.size() - 1, hidden);
    acts.back() = out;
    return nn::Network::dense(dims, acts, rng);
}

void require_finite(double v, const char* phase) {
    if (!std::isfinite(v)) throw TrainingError(phase, "non-finite loss");
}

// Adds d(bce(D(input), target))/d(params) into `acc` scaled by `scale` and
// returns the loss and, when requested, the input gradient.
double disc_term(nn::Network& disc, std::span<const double> input, double target, double scale,
                 nn::Gradients& acc, Vector* input_grad) {
    const Vector& p = disc.forward(input);
    const double t[1] = {target};
    const double loss = nn::bce_loss(p, t);
    Vector g = nn::bce_grad(p, t);
    g[0] *= scale;
    Vector gi = disc.backward(g, acc, input_grad != nullptr);
    if (input_grad) *input_grad = std::move(gi);
    return loss;
}

}  // namespace

void DaGanConfig::validate() const {
    if (input_dim == 0 || latent_dim == 0) throw PreconditionError("dagan dimensions must be positive");
    if (disc_hidden == 0 || batch_size == 0) throw PreconditionError("dagan sizes must be positive");
    if (std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h == 0; })) {
        throw PreconditionError("dagan hidden widths must be positive");
    }
    if (!(lambda_z > 0.0 && lambda_i > 0.0 && lambda_r > 0.0)) throw PreconditionError("loss weights must be positive");
}

DaGanModel::DaGanModel(const DaGanConfig& config) {
    config.validate();
    nn::Rng rng(config.seed);
    std::vector<std::size_t> enc{config.input_dim};
    enc.insert(enc.end(), config.hidden.begin(), config.hidden.end());
    enc.push_back(config.latent_dim);
    std::vector<std::size_t> dec(enc.rbegin(), enc.rend());

    encoder_ = build(enc, nn::Activation::relu, nn::Activation::identity, rng);
    decoder_ = build(dec, nn::Activation::relu, nn::Activation::sigmoid, rng);
    latent_disc_ = build({config.latent_dim, config.disc_hidden, 1}, nn::Activation::relu, nn::Activation::sigmoid, rng);
    image_disc_ = build({config.input_dim, config.disc_hidden, 1}, nn::Activation::relu, nn::Activation::sigmoid, rng);
    lambda_z_ = config.lambda_z;
    lambda_i_ = config.lambda_i;
    lambda_r_ = config.lambda_r;
    seed_ = config.seed;
}

DaGanModel::DaGanModel(nn::Network encoder, nn::Network decoder, nn::Network latent_disc, nn::Network image_disc,
                       double lambda_z, double lambda_i, double lambda_r, std::uint64_t seed)
    : encoder_(std::move(encoder)),
      decoder_(std::move(decoder)),
      latent_disc_(std::move(latent_disc)),
      image_disc_(std::move(image_disc)),
      lambda_z_(lambda_z),
      lambda_i_(lambda_i),
      lambda_r_(lambda_r),
      seed_(seed) {
    check_shapes();
}

void DaGanModel::check_shapes() const {
    const auto in = encoder_.input_dim();
    const auto lat = encoder_.output_dim();
    if (decoder_.input_dim() != lat || decoder_.output_dim() != in) throw StructuralError("decoder does not mirror encoder");
    if (latent_disc_.input_dim() != lat || latent_disc_.output_dim() != 1) throw StructuralError("bad latent discriminator");
    if (image_disc_.input_dim() != in || image_disc_.output_dim() != 1) throw StructuralError("bad image discriminator");
}

Vector DaGanModel::encode(std::span<const double> x) const {
    if (x.size() != input_dim()) throw StructuralError("encode: input dimension mismatch");
    return encoder_.infer(x);
}

Vector DaGanModel::reconstruct(std::span<const double> x) const { return decoder_.infer(encode(x)); }

double DaGanModel::reconstruction_error(std::span<const double> x) const { return nn::bce_loss(reconstruct(x), x); }

std::vector<std::uint8_t> DaGanModel::to_bytes() const {
    io::ByteWriter w;
    w.magic("ODGN");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(latent_dim()));
    w.u32(static_cast<std::uint32_t>(input_dim()));
    w.f64(lambda_z_);
    w.f64(lambda_i_);
    w.f64(lambda_r_);
    w.u64(seed_);
    encoder_.serialize(w);
    decoder_.serialize(w);
    latent_disc_.serialize(w);
    image_disc_.serialize(w);
    return w.take();
}

DaGanModel DaGanModel::from_bytes(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    r.expect_magic("ODGN");
    const auto version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("unsupported ODGN version " + std::to_string(version));
    const auto latent = r.u32();
    const auto input = r.u32();
    const double lz = r.f64();
    const double li = r.f64();
    const double lr = r.f64();
    const auto seed = r.u64();
    auto e = nn::Network::deserialize(r);
    auto g = nn::Network::deserialize(r);
    auto dz = nn::Network::deserialize(r);
    auto di = nn::Network::deserialize(r);
    r.expect_end();
    if (e.input_dim() != input || e.output_dim() != latent) throw FormatError("ODGN header disagrees with encoder");
    try {
        return DaGanModel(std::move(e), std::move(g), std::move(dz), std::move(di), lz, li, lr, seed);
    } catch (const StructuralError& ex) {
        throw FormatError(ex.what());
    }
}

void DaGanModel::save(const std::string& path) const { io::write_file(path, to_bytes()); }

DaGanModel DaGanModel::load(const std::string& path) { return from_bytes(io::read_file(path)); }

DaGanTrainer::DaGanTrainer(DaGanModel& model, const DaGanConfig& config)
    : model_(model),
      config_(config),
      rng_(config.seed ^ 0xD1B54A32D192ED03ULL),
      opt_image_disc_(config.disc_optimizer, model.image_disc()),
      opt_generator_(config.adversarial_optimizer, model.decoder()),
      opt_latent_disc_(config.disc_optimizer, model.latent_disc()),
      opt_encoder_(config.adversarial_optimizer, model.encoder()),
      opt_recon_encoder_(config.reconstruction_optimizer, model.encoder()),
      opt_recon_decoder_(config.reconstruction_optimizer, model.decoder()) {
    if (config.batch_size == 0) throw PreconditionError("batch size must be positive");
}

std::vector<Vector> DaGanTrainer::sample_prior(std::size_t n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> z(n, Vector(model_.latent_dim()));
    for (auto& v : z) {
        for (auto& x : v) x = normal(rng_);
    }
    return z;
}

double DaGanTrainer::phase_image_disc(std::span<const Vector> batch, std::span<const Vector> z_prior) {
    auto& d = model_.image_disc();
    auto grads = nn::Gradients::zeros_like(d);
    const double inv_real = 1.0 / static_cast<double>(batch.size());
    const double inv_fake = 1.0 / static_cast<double>(z_prior.size());
    double loss = 0.0;
    for (const auto& x : batch) loss += inv_real * disc_term(d, x, 1.0, inv_real, grads, nullptr);
    for (const auto& z : z_prior) {
        const Vector fake = model_.decoder().infer(z);
        loss += inv_fake * disc_term(d, fake, 0.0, inv_fake, grads, nullptr);
    }
    require_finite(loss, "image_disc");
    opt_image_disc_.step(d, grads, "image_disc");
    return loss;
}

double DaGanTrainer::phase_generator(std::span<const Vector> z_prior) {
    auto& g = model_.decoder();
    auto& d = model_.image_disc();
    auto grads = nn::Gradients::zeros_like(g);
    auto scratch = nn::Gradients::zeros_like(d);
    const double inv = 1.0 / static_cast<double>(z_prior.size());
    double loss = 0.0;
    for (const auto& z : z_prior) {
        const Vector fake = g.forward(z);
        Vector dx;
        loss += inv * disc_term(d, fake, 1.0, inv, scratch, &dx);
        g.backward(dx, grads, false);
    }
    require_finite(loss, "generator");
    opt_generator_.step(g, grads, "generator");
    return loss;
}

double DaGanTrainer::phase_latent_disc(std::span<const Vector> batch, std::span<const Vector> z_prior) {
    auto& d = model_.latent_disc();
    auto grads = nn::Gradients::zeros_like(d);
    const double inv_prior = 1.0 / static_cast<double>(z_prior.size());
    const double inv_enc = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& z : z_prior) loss += inv_prior * disc_term(d, z, 1.0, inv_prior, grads, nullptr);
    for (const auto& x : batch) {
        const Vector z = model_.encoder().infer(x);
        loss += inv_enc * disc_term(d, z, 0.0, inv_enc, grads, nullptr);
    }
    require_finite(loss, "latent_disc");
    opt_latent_disc_.step(d, grads, "latent_disc");
    return loss;
}

double DaGanTrainer::phase_encoder(std::span<const Vector> batch) {
    auto& e = model_.encoder();
    auto& d = model_.latent_disc();
    auto grads = nn::Gradients::zeros_like(e);
    auto scratch = nn::Gradients::zeros_like(d);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& x : batch) {
        const Vector z = e.forward(x);
        Vector dz;
        loss += inv * disc_term(d, z, 1.0, inv, scratch, &dz);
        e.backward(dz, grads, false);
    }
    require_finite(loss, "encoder");
    opt_encoder_.step(e, grads, "encoder");
    return loss;
}

double DaGanTrainer::phase_reconstruction(std::span<const Vector> batch) {
    auto& e = model_.encoder();
    auto& g = model_.decoder();
    auto ge = nn::Gradients::zeros_like(e);
    auto gg = nn::Gradients::zeros_like(g);
    const double scale = model_.lambda_r() / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& x : batch) {
        const Vector& z = e.forward(x);
        const Vector& xr = g.forward(z);
        loss += nn::bce_loss(xr, x) / static_cast<double>(batch.size());
        Vector grad = nn::bce_grad(xr, x);
        for (auto& v : grad) v *= scale;
        const Vector dz = g.backward(grad, gg, true);
        e.backward(dz, ge, false);
    }
    require_finite(loss, "reconstruction");
    // Validate both before touching either network.
    if (!ge.all_finite() || !gg.all_finite()) throw TrainingError("reconstruction", "non-finite gradient");
    opt_recon_encoder_.step(e, ge, "reconstruction");
    opt_recon_decoder_.step(g, gg, "reconstruction");
    return loss;
}

TrainReport DaGanTrainer::train_iteration(std::span<const Vector> batch) {
    if (batch.empty()) throw PreconditionError("train_iteration: empty batch");
    for (const auto& x : batch) {
        if (x.size() != model_.input_dim()) throw StructuralError("train_iteration: sample dimension mismatch");
    }
    const auto z_prior = sample_prior(batch.size());
    TrainReport r;
    r.iteration = iteration_;
    r.loss_i = phase_image_disc(batch, z_prior);
    phase_generator(z_prior);
    r.loss_z = phase_latent_disc(batch, z_prior);
    phase_encoder(batch);
    r.loss_r = phase_reconstruction(batch);
    r.combined = model_.lambda_z() * r.loss_z + model_.lambda_i() * r.loss_i + model_.lambda_r() * r.loss_r;
    ++iteration_;
    return r;
}

std::vector<TrainReport> DaGanTrainer::train_epoch(std::span<const Vector> data) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<TrainReport> reports;
    std::vector<Vector> batch;
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        batch.clear();
        const auto end = std::min(order.size(), start + config_.batch_size);
        for (auto i = start; i < end; ++i) batch.push_back(data[order[i]]);
        reports.push_back(train_iteration(batch));
    }
    return reports;
}

std::vector<TrainReport> DaGanTrainer::fit(std::span<const Vector> data) {
    std::vector<TrainReport> all;
    for (std::size_t e = 0; e < config_.epochs; ++e) {
        auto r = train_epoch(data);
        all.insert(all.end(), r.begin(), r.end());
    }
    return all;
}

std::vector<double> latent_prior_fit(std::span<const Vector> latents) {
    if (latents.size() < 100) throw PreconditionError("latent_prior_fit needs at least 100 samples");
    const std::size_t dim = latents.front().size();
    const double n = static_cast<double>(latents.size());
    std::vector<double> stats(dim, 0.0);
    std::vector<double> col(latents.size());
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < latents.size(); ++i) {
            if (latents[i].size() != dim) throw StructuralError("latent_prior_fit: mixed dimensions");
            col[i] = latents[i][j];
        }
        std::sort(col.begin(), col.end());
        double d = 0.0;
        for (std::size_t i = 0; i < col.size(); ++i) {
            const double cdf = 0.5 * std::erfc(-col[i] / std::sqrt(2.0));
            d = std::max({d, static_cast<double>(i + 1) / n - cdf, cdf - static_cast<double>(i) / n});
        }
        stats[j] = d;
    }
    return stats;
}

std::vector<double> latent_prior_fit(const DaGanModel& model, std::span<const Vector> samples) {
    std::vector<Vector> z;
    z.reserve(samples.size());
    for (const auto& x : samples) z.push_back(model.encode(x));
    return latent_prior_fit(z);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::max(std::sqrt(ss / n), 1e-12)};
}

}  // namespace

double OutlierScorer::reconstruction_term(const DaGanModel& model, std::span<const double> x) const {
    double h = 0.0;
    for (double v : x) {
        const double p = std::clamp(v, 1e-7, 1.0 - 1e-7);
        h -= p * std::log(p) + (1.0 - p) * std::log(1.0 - p);
    }
    return model.reconstruction_error(x) - h / static_cast<double>(x.size());
}

double OutlierScorer::latent_term(const DaGanModel& model, std::span<const double> x) const {
    const auto z = model.encode(x);
    const double d = geometry::normalized_distance(z, centroid_, radius_);
    const auto bin = std::min(log_density_.size() - 1, static_cast<std::size_t>(d * static_cast<double>(log_density_.size())));
    return -log_density_[bin];
}

OutlierScorer OutlierScorer::fit(const DaGanModel& model, std::span<const Vector> train,
                                 std::span<const Vector> validation, const OutlierScorerConfig& config) {
    if (train.empty() || validation.empty()) throw PreconditionError("outlier scorer needs train and validation data");
    if (config.bins == 0) throw PreconditionError("outlier scorer needs at least one bin");
    OutlierScorer s;
    s.config_ = config;

    std::vector<Vector> latents;
    latents.reserve(train.size());
    for (const auto& x : train) latents.push_back(model.encode(x));
    s.centroid_ = geometry::centroid(latents);
    std::vector<double> dist;
    for (const auto& z : latents) dist.push_back(geometry::l2_distance(z, s.centroid_));
    s.radius_ = std::max(geometry::quantile(dist, geometry::kRadiusQuantile), geometry::kMinRadius);
    geometry::DistanceHistogram hist(config.bins);
    for (const auto& z : latents) hist.add(geometry::normalized_distance(z, s.centroid_, s.radius_));
    const double denom = static_cast<double>(hist.total()) + 0.5 * static_cast<double>(config.bins);
    for (auto c : hist.bins()) s.log_density_.push_back(std::log((static_cast<double>(c) + 0.5) / denom));

    std::vector<double> rec, lat;
    for (const auto& x : validation) {
        rec.push_back(s.reconstruction_term(model, x));
        lat.push_back(s.latent_term(model, x));
    }
    std::tie(s.rec_mean_, s.rec_std_) = mean_std(rec);
    std::tie(s.lat_mean_, s.lat_std_) = mean_std(lat);
    std::vector<double> scores;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        scores.push_back((rec[i] - s.rec_mean_) / s.rec_std_ + config.latent_weight * (lat[i] - s.lat_mean_) / s.lat_std_);
    }
    s.threshold_ = geometry::quantile(scores, config.quantile);
    return s;
}

double OutlierScorer::score(const DaGanModel& model, std::span<const double> x) const {
    return (reconstruction_term(model, x) - rec_mean_) / rec_std_ +
           config_.latent_weight * (latent_term(model, x) - lat_mean_) / lat_std_;
}

}  // namespace odrift::dagan
