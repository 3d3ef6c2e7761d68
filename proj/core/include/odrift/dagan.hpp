#pragma once

#include "odrift/numerics.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

// Dual-adversarial autoencoder: encoder E, decoder G, latent discriminator
// D_Z and image discriminator D_I, all dense.
namespace odrift::dagan {

using nn::Vector;

struct DaGanConfig {
    std::size_t input_dim = 0;
    std::size_t latent_dim = 8;
    // Encoder hidden widths; the decoder mirrors them.
    std::vector<std::size_t> hidden = {64, 32};
    std::size_t disc_hidden = 32;
    double lambda_z = 1.0;
    double lambda_i = 1.0;
    double lambda_r = 0.5;
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    std::uint64_t seed = 1;
    // Optimizers for the discriminators, for the adversarial E/G updates and
    // for the joint reconstruction update.
    nn::OptimizerConfig disc_optimizer;
    nn::OptimizerConfig adversarial_optimizer;
    nn::OptimizerConfig reconstruction_optimizer;

    void validate() const;
};

struct TrainReport {
    std::uint64_t iteration = 0;
    double loss_z = 0.0;
    double loss_i = 0.0;
    double loss_r = 0.0;
    double combined = 0.0;
};

class DaGanModel {
public:
    DaGanModel() = default;
    explicit DaGanModel(const DaGanConfig& config);
    DaGanModel(nn::Network encoder, nn::Network decoder, nn::Network latent_disc, nn::Network image_disc,
               double lambda_z, double lambda_i, double lambda_r, std::uint64_t seed);

    Vector encode(std::span<const double> x) const;
    Vector reconstruct(std::span<const double> x) const;
    double reconstruction_error(std::span<const double> x) const;

    std::size_t input_dim() const { return encoder_.input_dim(); }
    std::size_t latent_dim() const { return encoder_.output_dim(); }
    double lambda_z() const noexcept { return lambda_z_; }
    double lambda_i() const noexcept { return lambda_i_; }
    double lambda_r() const noexcept { return lambda_r_; }
    std::uint64_t seed() const noexcept { return seed_; }

    nn::Network& encoder() noexcept { return encoder_; }
    nn::Network& decoder() noexcept { return decoder_; }
    nn::Network& latent_disc() noexcept { return latent_disc_; }
    nn::Network& image_disc() noexcept { return image_disc_; }
    const nn::Network& encoder() const noexcept { return encoder_; }
    const nn::Network& decoder() const noexcept { return decoder_; }
    const nn::Network& latent_disc() const noexcept { return latent_disc_; }
    const nn::Network& image_disc() const noexcept { return image_disc_; }

    std::vector<std::uint8_t> to_bytes() const;
    static DaGanModel from_bytes(std::span<const std::uint8_t> bytes);
    void save(const std::string& path) const;
    static DaGanModel load(const std::string& path);

private:
    void check_shapes() const;

    nn::Network encoder_;
    nn::Network decoder_;
    nn::Network latent_disc_;
    nn::Network image_disc_;
    double lambda_z_ = 1.0;
    double lambda_i_ = 1.0;
    double lambda_r_ = 0.5;
    std::uint64_t seed_ = 0;
};

// Runs the five ordered update phases. Each phase is exposed so callers can
// observe parameters between them.
class DaGanTrainer {
public:
    DaGanTrainer(DaGanModel& model, const DaGanConfig& config);

    TrainReport train_iteration(std::span<const Vector> batch);
    // One shuffled pass over `data` in batches; returns per-iteration reports.
    std::vector<TrainReport> train_epoch(std::span<const Vector> data);
    std::vector<TrainReport> fit(std::span<const Vector> data);

    std::vector<Vector> sample_prior(std::size_t n);
    double phase_image_disc(std::span<const Vector> batch, std::span<const Vector> z_prior);
    double phase_generator(std::span<const Vector> z_prior);
    double phase_latent_disc(std::span<const Vector> batch, std::span<const Vector> z_prior);
    double phase_encoder(std::span<const Vector> batch);
    double phase_reconstruction(std::span<const Vector> batch);

    std::uint64_t iterations() const noexcept { return iteration_; }

private:
    DaGanModel& model_;
    DaGanConfig config_;
    nn::Rng rng_;
    nn::Optimizer opt_image_disc_;
    nn::Optimizer opt_generator_;
    nn::Optimizer opt_latent_disc_;
    nn::Optimizer opt_encoder_;
    nn::Optimizer opt_recon_encoder_;
    nn::Optimizer opt_recon_decoder_;
    std::uint64_t iteration_ = 0;
};

// One-sample Kolmogorov-Smirnov statistic of each coordinate against N(0,1).
// Needs at least 100 samples.
std::vector<double> latent_prior_fit(std::span<const Vector> latents);
std::vector<double> latent_prior_fit(const DaGanModel& model, std::span<const Vector> samples);

}  // namespace odrift::dagan

namespace odrift::dagan {

// Outlier score: standardized reconstruction excess (BCE minus the input's
// own entropy) plus a weighted, standardized latent density term. The density
// term is -log of the histogram density of the sample's normalized distance
// to the training-latent centroid.
struct OutlierScorerConfig {
    double latent_weight = 0.25;
    double quantile = 0.95;  // of validation inlier scores, sets the threshold
    std::size_t bins = 64;
};

class OutlierScorer {
public:
    static OutlierScorer fit(const DaGanModel& model, std::span<const Vector> train, std::span<const Vector> validation,
                             const OutlierScorerConfig& config = {});

    double score(const DaGanModel& model, std::span<const double> x) const;
    bool is_outlier(const DaGanModel& model, std::span<const double> x) const {
        return score(model, x) > threshold_;
    }
    double threshold() const noexcept { return threshold_; }

private:
    double reconstruction_term(const DaGanModel& model, std::span<const double> x) const;
    double latent_term(const DaGanModel& model, std::span<const double> x) const;

    OutlierScorerConfig config_;
    Vector centroid_;
    double radius_ = 1.0;
    std::vector<double> log_density_;
    double rec_mean_ = 0.0, rec_std_ = 1.0;
    double lat_mean_ = 0.0, lat_std_ = 1.0;
    double threshold_ = 0.0;
};

}  // namespace odrift::dagan
