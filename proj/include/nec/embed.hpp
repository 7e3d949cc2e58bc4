#pragma once

// Small dense embedding network (observation -> key) with hand-written
// reverse-mode gradients, an RMSProp optimizer and a frozen random projection.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace nec {

enum class Activation { identity, relu };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::identity;
};

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;  // out x in, row-major
    std::vector<double> bias;    // out
    Activation activation = Activation::identity;

    double& w(std::size_t row, std::size_t col) { return weight[row * in + col]; }
    double w(std::size_t row, std::size_t col) const { return weight[row * in + col]; }
};

/// Parameters of the embedding network. Also used as the container for
/// gradients and optimizer accumulators, which share its shapes.
struct EmbeddingParams {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t key_dim() const { return layers.empty() ? 0 : layers.back().out; }
    std::size_t num_parameters() const;

    /// Same shapes, every entry zero.
    EmbeddingParams zeros_like() const;
    bool same_shape(const EmbeddingParams& other) const;
    bool all_finite() const;

    /// Visits (layer, flat index, value&) over weights then biases of each layer.
    template <class F>
    void for_each(F&& f) {
        for (auto& layer : layers) {
            for (auto& v : layer.weight) f(v);
            for (auto& v : layer.bias) f(v);
        }
    }
    template <class F>
    void for_each(F&& f) const {
        for (const auto& layer : layers) {
            for (const auto& v : layer.weight) f(v);
            for (const auto& v : layer.bias) f(v);
        }
    }

    friend bool operator==(const EmbeddingParams&, const EmbeddingParams&);
};

bool operator==(const DenseLayer& a, const DenseLayer& b);

/// Activations cached by embed_forward. inputs[i] feeds layer i, pre[i] is
/// its pre-activation; the key is the last layer's activation.
struct ForwardTrace {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre;
    std::vector<double> output;
};

struct EmbedResult {
    std::vector<double> key;
    ForwardTrace trace;
};

struct EmbedGradients {
    EmbeddingParams params;
    std::vector<double> d_obs;
};

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
/// Throws ConfigError unless each layer's input matches the previous output.
EmbeddingParams init_params(std::span<const LayerShape> shapes, std::uint64_t seed);

/// Single identity-activation layer with W = I (requires key_dim == obs_dim).
EmbeddingParams identity_params(std::size_t dim);

EmbedResult embed_forward(const EmbeddingParams& params, std::span<const double> obs);

/// Forward pass without keeping the trace.
std::vector<double> embed(const EmbeddingParams& params, std::span<const double> obs);

EmbedGradients embed_backward(const EmbeddingParams& params, const ForwardTrace& trace,
                              std::span<const double> d_key);

struct RmsPropConfig {
    double learning_rate = 1e-3;
    double rho = 0.9;
    double epsilon = 1e-8;
};

struct OptState {
    EmbeddingParams nu;  // running mean of squared gradients
    RmsPropConfig config;

    OptState() = default;
    OptState(const EmbeddingParams& like, RmsPropConfig cfg);
};

/// nu <- rho*nu + (1-rho)*g^2 ; theta <- theta - lr*g/(sqrt(nu)+eps).
/// Returns false and leaves both untouched when any gradient is non-finite.
bool rmsprop_step(EmbeddingParams& params, const EmbeddingParams& grads, OptState& state);

class RandomProjection {
public:
    RandomProjection() = default;
    /// Entries i.i.d. N(0,1) scaled by 1/sqrt(key_dim).
    RandomProjection(std::size_t key_dim, std::size_t obs_dim, std::uint64_t seed);
    /// Wraps an explicit matrix (key_dim x obs_dim, row-major).
    RandomProjection(std::size_t key_dim, std::size_t obs_dim, std::vector<double> matrix);

    std::vector<double> embed(std::span<const double> obs) const;

    std::size_t key_dim() const { return key_dim_; }
    std::size_t obs_dim() const { return obs_dim_; }
    std::uint64_t seed() const { return seed_; }
    std::span<const double> matrix() const { return matrix_; }

    /// Same map as a one-layer identity-activation network.
    EmbeddingParams as_params() const;

private:
    std::size_t key_dim_ = 0;
    std::size_t obs_dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> matrix_;
};

// Text checkpoint format:
//   nec-embedding 1
//   layers <L>
//   dense <in> <out> <activation>     (per layer, followed by)
//   <out*in weights, row-major>
//   <out biases>
// Values are printed in shortest round-trip form, so load(save(p)) == p.
void save_params(std::ostream& os, const EmbeddingParams& params);
EmbeddingParams load_params(std::istream& is);

}  // namespace nec
