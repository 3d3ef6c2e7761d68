#pragma once

#include "odrift/binary_io.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

// Minimal dense network substrate: forward/backward with hand-derived
// gradients, BCE / softmax cross-entropy losses, SGD and Adam.
namespace odrift::nn {

using Vector = std::vector<double>;
using Rng = std::mt19937_64;

enum class Activation : std::uint8_t { relu = 0, sigmoid = 1, tanh = 2, identity = 3 };

std::string_view to_string(Activation a);
double activate(Activation a, double x);
// Derivative expressed through the activation's output value.
double activation_slope(Activation a, double output);

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
    Activation activation = Activation::identity;

    std::size_t in_dim() const noexcept { return weights.cols; }
    std::size_t out_dim() const noexcept { return weights.rows; }
    std::size_t param_count() const noexcept { return weights.data.size() + bias.size(); }
};

struct LayerGradient {
    Matrix weights;
    Vector bias;
};

class Network;

struct Gradients {
    std::vector<LayerGradient> layers;

    static Gradients zeros_like(const Network& net);
    void add(const Gradients& other);
    void scale(double factor);
    void set_zero();
    bool all_finite() const;
};

class Network {
public:
    Network() = default;
    explicit Network(std::vector<DenseLayer> layers);

    // Glorot-uniform weights, zero biases. dims has one more entry than
    // activations.
    static Network dense(std::span<const std::size_t> dims, std::span<const Activation> activations,
                         Rng& rng);
    static Network dense(std::initializer_list<std::size_t> dims,
                         std::initializer_list<Activation> activations, Rng& rng);

    // Caching forward pass; the returned reference is valid until the next
    // forward on this instance.
    const Vector& forward(std::span<const double> input);

    // Cache-free forward pass; safe for concurrent readers.
    Vector infer(std::span<const double> input) const;

    // Backprop through the cached activations of the last forward call.
    // Gradients are added into `acc`; the gradient w.r.t. the network input
    // is returned when `want_input_grad` is set.
    Vector backward(std::span<const double> output_grad, Gradients& acc, bool want_input_grad = true);
    Gradients backward(std::span<const double> output_grad);

    bool has_cache() const noexcept { return cached_; }

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t param_count() const;
    std::size_t layer_count() const noexcept { return layers_.size(); }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& mutable_layers() noexcept { return layers_; }

    void serialize(io::ByteWriter& out) const;
    static Network deserialize(io::ByteReader& in);
    std::vector<std::uint8_t> to_bytes() const;
    static Network from_bytes(std::span<const std::uint8_t> bytes);

    // Bitwise parameter equality (ignores caches).
    bool same_parameters(const Network& other) const;

private:
    std::vector<DenseLayer> layers_;
    std::vector<Vector> inputs_;
    std::vector<Vector> outputs_;
    bool cached_ = false;
};

// Prediction clamp applied before every log in the BCE.
inline constexpr double kBceEpsilon = 1e-7;

// Mean over elements of -[t log p + (1-t) log(1-p)].
double bce_loss(std::span<const double> pred, std::span<const double> target);
// d(bce_loss)/d(pred), evaluated at the clamped prediction.
Vector bce_grad(std::span<const double> pred, std::span<const double> target);

Vector softmax(std::span<const double> logits);
// Returns -log softmax(logits)[label]; writes d/dlogits into grad if given.
double softmax_cross_entropy(std::span<const double> logits, std::size_t label, Vector* grad = nullptr);

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Optimizer {
public:
    Optimizer(OptimizerConfig config, const Network& shape);

    // Applies one update. Non-finite gradients throw TrainingError tagged with
    // `phase` and leave the parameters untouched.
    void step(Network& net, const Gradients& grads, std::string_view phase = "optimizer");

    std::uint64_t steps() const noexcept { return step_; }
    const OptimizerConfig& config() const noexcept { return config_; }

private:
    OptimizerConfig config_;
    Gradients first_;
    Gradients second_;
    std::uint64_t step_ = 0;
};

}  // namespace odrift::nn
