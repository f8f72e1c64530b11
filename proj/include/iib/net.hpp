#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iib/matrix.hpp"
#include "iib/rng.hpp"

namespace iib {

enum class Activation : std::uint8_t { kRelu = 0, kIdentity = 1 };

struct Layer {
    Matrix w;  // out x in
    Vec b;     // out
    Activation act = Activation::kIdentity;
};

// Fully connected feed-forward network. Consecutive layer dimensions chain.
struct DenseNet {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
    std::size_t num_params() const;
    bool all_params_finite() const;
};

// Scaled uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases.
// dims = [input, hidden..., output]; acts has one entry per layer.
DenseNet make_dense_net(std::span<const std::size_t> dims, std::span<const Activation> acts, Rng rng);

// ReLU hidden layers, identity output.
DenseNet make_mlp(std::span<const std::size_t> dims, Rng rng);

// Activations recorded by forward, sufficient for exact gradient replay.
struct ForwardTape {
    Vec input;
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer

    const Vec& output() const { return post.back(); }
};

Vec forward(const DenseNet& net, const Vec& input);
void forward(const DenseNet& net, const Vec& input, ForwardTape& tape);

// Per-layer parameter gradients, same shapes as the net.
struct NetGrads {
    std::vector<Matrix> w;
    std::vector<Vec> b;

    static NetGrads zeros_like(const DenseNet& net);
    void clear();
    void add_scaled(const NetGrads& other, double s);
    bool all_finite() const;
};

// Reverse-mode replay of the recorded computation. Accumulates parameter
// gradients into `grads` and returns the gradient w.r.t. the net input.
// ReLU uses the zero subgradient at the kink.
Vec backward(const DenseNet& net, const ForwardTape& tape, const Vec& output_grad, NetGrads& grads);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step_count = 0;
    AdamConfig cfg;

    static AdamState zeros_like(const DenseNet& net, AdamConfig cfg);
};

// Standard Adam update with bias correction. Throws TrainingAbort naming the
// offending parameter if a gradient is non-finite. `path` prefixes the
// parameter location in that message.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state, std::string_view path = "net");

// Checkpoint format: magic "IIBNET01", u32 version, u32 layer count, per
// layer u32 rows/u32 cols/u8 activation, then little-endian 64-bit floats in
// layer order (weights row-major, then bias).
void save_net(std::ostream& os, const DenseNet& net);
DenseNet load_net(std::istream& is);
void save_net_file(const std::string& path, const DenseNet& net);
DenseNet load_net_file(const std::string& path);

}  // namespace iib
