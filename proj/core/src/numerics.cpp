#include "odrift/numerics.hpp"

#include "odrift/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace odrift::nn {

namespace {

constexpr std::uint32_t kNetworkFormatVersion = 1;

void check_activation_tag(std::uint8_t tag) {
    if (tag > static_cast<std::uint8_t>(Activation::identity)) {
        throw FormatError("unknown activation tag " + std::to_string(tag));
    }
}

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::sigmoid:
            // Split by sign so exp never overflows.
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            else {
                const double e = std::exp(x);
                return e / (1.0 + e);
            }
        case Activation::tanh: return std::tanh(x);
        case Activation::identity: return x;
    }
    return x;
}

double activation_slope(Activation a, double y) {
    switch (a) {
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::tanh: return 1.0 - y * y;
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

Gradients Gradients::zeros_like(const Network& net) {
    Gradients g;
    g.layers.reserve(net.layers().size());
    for (const auto& layer : net.layers()) {
        g.layers.push_back({Matrix(layer.out_dim(), layer.in_dim()), Vector(layer.out_dim(), 0.0)});
    }
    return g;
}

void Gradients::add(const Gradients& other) {
    if (other.layers.size() != layers.size()) throw StructuralError("gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& w = layers[l].weights.data;
        const auto& ow = other.layers[l].weights.data;
        if (w.size() != ow.size() || layers[l].bias.size() != other.layers[l].bias.size()) {
            throw StructuralError("gradient shape mismatch");
        }
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += ow[i];
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i) layers[l].bias[i] += other.layers[l].bias[i];
    }
}

void Gradients::scale(double factor) {
    for (auto& layer : layers) {
        for (auto& v : layer.weights.data) v *= factor;
        for (auto& v : layer.bias) v *= factor;
    }
}

void Gradients::set_zero() {
    for (auto& layer : layers) {
        std::fill(layer.weights.data.begin(), layer.weights.data.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
}

bool Gradients::all_finite() const {
    for (const auto& layer : layers) {
        for (double v : layer.weights.data) if (!std::isfinite(v)) return false;
        for (double v : layer.bias) if (!std::isfinite(v)) return false;
    }
    return true;
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& layer = layers_[i];
        if (layer.weights.data.size() != layer.weights.rows * layer.weights.cols) {
            throw StructuralError("layer " + std::to_string(i) + " weight storage does not match shape");
        }
        if (layer.bias.size() != layer.weights.rows) {
            throw StructuralError("layer " + std::to_string(i) + " bias length != weight rows");
        }
        if (i > 0 && layers_[i - 1].out_dim() != layer.in_dim()) {
            throw StructuralError("layer " + std::to_string(i) + " input dim does not chain");
        }
    }
}

Network Network::dense(std::span<const std::size_t> dims, std::span<const Activation> activations,
                       Rng& rng) {
    if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
        throw StructuralError("dense(): need dims.size() == activations.size() + 1 >= 2");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i];
        const std::size_t out = dims[i + 1];
        if (in == 0 || out == 0) throw StructuralError("zero-width layer");
        DenseLayer layer{Matrix(out, in), Vector(out, 0.0), activations[i]};
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& w : layer.weights.data) w = dist(rng);
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

Network Network::dense(std::initializer_list<std::size_t> dims,
                       std::initializer_list<Activation> activations, Rng& rng) {
    return dense(std::span<const std::size_t>(dims.begin(), dims.size()),
                 std::span<const Activation>(activations.begin(), activations.size()), rng);
}

std::size_t Network::input_dim() const {
    if (layers_.empty()) throw StateError("empty network");
    return layers_.front().in_dim();
}

std::size_t Network::output_dim() const {
    if (layers_.empty()) throw StateError("empty network");
    return layers_.back().out_dim();
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.param_count();
    return n;
}

namespace {

void dense_forward(const DenseLayer& layer, std::span<const double> in, Vector& out) {
    out.resize(layer.out_dim());
    const std::size_t cols = layer.in_dim();
    const double* w = layer.weights.data.data();
    for (std::size_t r = 0; r < layer.out_dim(); ++r) {
        double acc = layer.bias[r];
        const double* wr = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * in[c];
        out[r] = activate(layer.activation, acc);
    }
}

}  // namespace

const Vector& Network::forward(std::span<const double> input) {
    if (input.size() != input_dim()) {
        throw StructuralError("forward: input length " + std::to_string(input.size()) + " != " +
                              std::to_string(input_dim()));
    }
    inputs_.resize(layers_.size());
    outputs_.resize(layers_.size());
    inputs_[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (l > 0) inputs_[l] = outputs_[l - 1];
        dense_forward(layers_[l], inputs_[l], outputs_[l]);
    }
    cached_ = true;
    return outputs_.back();
}

Vector Network::infer(std::span<const double> input) const {
    if (input.size() != input_dim()) {
        throw StructuralError("infer: input length " + std::to_string(input.size()) + " != " +
                              std::to_string(input_dim()));
    }
    Vector cur(input.begin(), input.end());
    Vector next;
    for (const auto& layer : layers_) {
        dense_forward(layer, cur, next);
        cur.swap(next);
    }
    return cur;
}

Vector Network::backward(std::span<const double> output_grad, Gradients& acc, bool want_input_grad) {
    if (!cached_) throw StateError("backward called before forward");
    if (output_grad.size() != output_dim()) throw StructuralError("backward: output grad length mismatch");
    if (acc.layers.size() != layers_.size()) throw StructuralError("backward: accumulator shape mismatch");

    Vector delta(output_grad.begin(), output_grad.end());
    Vector upstream;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const auto& layer = layers_[li];
        const auto& y = outputs_[li];
        const auto& x = inputs_[li];
        for (std::size_t r = 0; r < delta.size(); ++r) delta[r] *= activation_slope(layer.activation, y[r]);

        auto& g = acc.layers[li];
        const std::size_t cols = layer.in_dim();
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double d = delta[r];
            g.bias[r] += d;
            if (d == 0.0) continue;
            double* gr = g.weights.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) gr[c] += d * x[c];
        }
        if (li == 0 && !want_input_grad) return {};
        upstream.assign(cols, 0.0);
        for (std::size_t r = 0; r < layer.out_dim(); ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            const double* wr = layer.weights.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) upstream[c] += d * wr[c];
        }
        delta.swap(upstream);
    }
    return delta;
}

Gradients Network::backward(std::span<const double> output_grad) {
    Gradients g = Gradients::zeros_like(*this);
    backward(output_grad, g, false);
    return g;
}

bool Network::same_parameters(const Network& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& a = layers_[l];
        const auto& b = other.layers_[l];
        if (a.activation != b.activation || a.weights.rows != b.weights.rows ||
            a.weights.cols != b.weights.cols || a.weights.data != b.weights.data || a.bias != b.bias) {
            return false;
        }
    }
    return true;
}

void Network::serialize(io::ByteWriter& out) const {
    out.magic("ODNN");
    out.u32(kNetworkFormatVersion);
    out.u32(static_cast<std::uint32_t>(layers_.size()));
    for (const auto& layer : layers_) {
        out.u32(static_cast<std::uint32_t>(layer.in_dim()));
        out.u32(static_cast<std::uint32_t>(layer.out_dim()));
        out.u8(static_cast<std::uint8_t>(layer.activation));
        for (double w : layer.weights.data) out.f32(static_cast<float>(w));
        for (double b : layer.bias) out.f32(static_cast<float>(b));
    }
}

Network Network::deserialize(io::ByteReader& in) {
    in.expect_magic("ODNN");
    const auto version = in.u32();
    if (version != kNetworkFormatVersion) {
        throw FormatError("unsupported ODNN version " + std::to_string(version));
    }
    const auto count = in.u32();
    if (count == 0 || count > 4096) throw FormatError("implausible layer count");
    std::vector<DenseLayer> layers;
    layers.reserve(count);
    for (std::uint32_t l = 0; l < count; ++l) {
        const std::size_t in_dim = in.u32();
        const std::size_t out_dim = in.u32();
        const auto tag = in.u8();
        check_activation_tag(tag);
        if (in_dim == 0 || out_dim == 0) throw FormatError("zero-width layer");
        if (in_dim * out_dim > in.remaining() / 4) throw FormatError("layer exceeds payload");
        DenseLayer layer{Matrix(out_dim, in_dim), Vector(out_dim), static_cast<Activation>(tag)};
        for (auto& w : layer.weights.data) {
            w = in.f32();
            if (!std::isfinite(w)) throw FormatError("non-finite weight");
        }
        for (auto& b : layer.bias) {
            b = in.f32();
            if (!std::isfinite(b)) throw FormatError("non-finite bias");
        }
        if (!layers.empty() && layers.back().out_dim() != in_dim) throw FormatError("layer dims do not chain");
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
}

std::vector<std::uint8_t> Network::to_bytes() const {
    io::ByteWriter w;
    serialize(w);
    return w.take();
}

Network Network::from_bytes(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    auto net = deserialize(r);
    r.expect_end();
    return net;
}

double bce_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw StructuralError("bce_loss: length mismatch");
    if (pred.empty()) throw StructuralError("bce_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
        const double t = target[i];
        sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return sum / static_cast<double>(pred.size());
}

Vector bce_grad(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw StructuralError("bce_grad: length mismatch");
    Vector g(pred.size());
    const double n = static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = std::clamp(pred[i], kBceEpsilon, 1.0 - kBceEpsilon);
        g[i] = (p - target[i]) / (p * (1.0 - p) * n);
    }
    return g;
}

Vector softmax(std::span<const double> logits) {
    if (logits.empty()) throw StructuralError("softmax: empty input");
    const double m = *std::max_element(logits.begin(), logits.end());
    Vector p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (auto& v : p) v /= z;
    return p;
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t label, Vector* grad) {
    if (label >= logits.size()) throw StructuralError("softmax_cross_entropy: label out of range");
    auto p = softmax(logits);
    const double loss = -std::log(std::max(p[label], 1e-300));
    if (grad) {
        p[label] -= 1.0;
        *grad = std::move(p);
    }
    return loss;
}

Optimizer::Optimizer(OptimizerConfig config, const Network& shape)
    : config_(config), first_(Gradients::zeros_like(shape)), second_(Gradients::zeros_like(shape)) {
    if (!(config_.learning_rate > 0.0) || !std::isfinite(config_.learning_rate)) {
        throw PreconditionError("learning rate must be positive");
    }
}

void Optimizer::step(Network& net, const Gradients& grads, std::string_view phase) {
    auto& layers = net.mutable_layers();
    if (grads.layers.size() != layers.size() || first_.layers.size() != layers.size()) {
        throw StructuralError("optimizer: gradient/parameter layer count mismatch");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (grads.layers[l].weights.data.size() != layers[l].weights.data.size() ||
            grads.layers[l].bias.size() != layers[l].bias.size() ||
            first_.layers[l].weights.data.size() != layers[l].weights.data.size()) {
            throw StructuralError("optimizer: gradient/parameter shape mismatch");
        }
    }
    if (!grads.all_finite()) throw TrainingError(std::string(phase), "non-finite gradient, step aborted");

    ++step_;
    const double lr = config_.learning_rate;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& w = layers[l].weights.data;
            const auto& gw = grads.layers[l].weights.data;
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
            auto& b = layers[l].bias;
            const auto& gb = grads.layers[l].bias;
            for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
        }
        return;
    }

    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights.data, grads.layers[l].weights.data, first_.layers[l].weights.data,
               second_.layers[l].weights.data);
        update(layers[l].bias, grads.layers[l].bias, first_.layers[l].bias, second_.layers[l].bias);
    }
}

}  // namespace odrift::nn
