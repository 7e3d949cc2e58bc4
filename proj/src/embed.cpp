#include "nec/embed.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace nec {

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
    }
    return "identity";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity" || name == "linear") return Activation::identity;
    if (name == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::size_t EmbeddingParams::num_parameters() const {
    std::size_t n = 0;
    for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

EmbeddingParams EmbeddingParams::zeros_like() const {
    EmbeddingParams out = *this;
    out.for_each([](double& v) { v = 0.0; });
    return out;
}

bool EmbeddingParams::same_shape(const EmbeddingParams& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& a = layers[i];
        const auto& b = other.layers[i];
        if (a.in != b.in || a.out != b.out || a.activation != b.activation) return false;
    }
    return true;
}

bool EmbeddingParams::all_finite() const {
    bool ok = true;
    for_each([&](double v) { ok = ok && std::isfinite(v); });
    return ok;
}

bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.in == b.in && a.out == b.out && a.activation == b.activation && a.weight == b.weight &&
           a.bias == b.bias;
}

bool operator==(const EmbeddingParams& a, const EmbeddingParams& b) { return a.layers == b.layers; }

EmbeddingParams init_params(std::span<const LayerShape> shapes, std::uint64_t seed) {
    if (shapes.empty()) throw ConfigError("embedding needs at least one layer");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].in == 0 || shapes[i].out == 0)
            throw ConfigError("layer " + std::to_string(i) + " has a zero dimension");
        if (i > 0 && shapes[i].in != shapes[i - 1].out)
            throw ConfigError("layer " + std::to_string(i) + " input " + std::to_string(shapes[i].in) +
                              " does not match previous output " + std::to_string(shapes[i - 1].out));
    }
    std::mt19937_64 rng(seed);
    EmbeddingParams params;
    params.layers.reserve(shapes.size());
    for (const auto& shape : shapes) {
        DenseLayer layer;
        layer.in = shape.in;
        layer.out = shape.out;
        layer.activation = shape.activation;
        const double limit = std::sqrt(6.0 / static_cast<double>(shape.in + shape.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        layer.weight.resize(shape.in * shape.out);
        for (auto& w : layer.weight) w = dist(rng);
        layer.bias.assign(shape.out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

EmbeddingParams identity_params(std::size_t dim) {
    if (dim == 0) throw ConfigError("identity embedding needs a positive dimension");
    DenseLayer layer;
    layer.in = dim;
    layer.out = dim;
    layer.activation = Activation::identity;
    layer.weight.assign(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) layer.w(i, i) = 1.0;
    layer.bias.assign(dim, 0.0);
    EmbeddingParams params;
    params.layers.push_back(std::move(layer));
    return params;
}

namespace {

void check_input(const EmbeddingParams& params, std::span<const double> obs) {
    if (params.layers.empty()) throw InputError("embedding has no layers");
    if (obs.size() != params.input_dim())
        throw InputError("observation length " + std::to_string(obs.size()) + " does not match embedding input " +
                         std::to_string(params.input_dim()));
}

void dense_apply(const DenseLayer& layer, std::span<const double> x, std::vector<double>& z) {
    z.resize(layer.out);
    for (std::size_t r = 0; r < layer.out; ++r) {
        const double* row = layer.weight.data() + r * layer.in;
        double acc = layer.bias[r];
        for (std::size_t c = 0; c < layer.in; ++c) acc += row[c] * x[c];
        z[r] = acc;
    }
}

void activate(Activation act, const std::vector<double>& z, std::vector<double>& a) {
    a = z;
    if (act == Activation::relu)
        for (auto& v : a) v = v > 0.0 ? v : 0.0;
}

}  // namespace

EmbedResult embed_forward(const EmbeddingParams& params, std::span<const double> obs) {
    check_input(params, obs);
    EmbedResult result;
    auto& trace = result.trace;
    trace.inputs.reserve(params.layers.size());
    trace.pre.reserve(params.layers.size());
    std::vector<double> x(obs.begin(), obs.end());
    for (const auto& layer : params.layers) {
        std::vector<double> z;
        dense_apply(layer, x, z);
        std::vector<double> a;
        activate(layer.activation, z, a);
        trace.inputs.push_back(std::move(x));
        trace.pre.push_back(std::move(z));
        x = std::move(a);
    }
    trace.output = x;
    result.key = std::move(x);
    return result;
}

std::vector<double> embed(const EmbeddingParams& params, std::span<const double> obs) {
    check_input(params, obs);
    std::vector<double> x(obs.begin(), obs.end());
    std::vector<double> z;
    for (const auto& layer : params.layers) {
        dense_apply(layer, x, z);
        activate(layer.activation, z, x);
    }
    return x;
}

EmbedGradients embed_backward(const EmbeddingParams& params, const ForwardTrace& trace,
                              std::span<const double> d_key) {
    const std::size_t n_layers = params.layers.size();
    if (trace.inputs.size() != n_layers || trace.pre.size() != n_layers)
        throw InternalError("forward trace does not match embedding layer count");
    if (d_key.size() != params.key_dim()) throw InputError("key gradient has wrong dimension");

    EmbedGradients out;
    out.params = params.zeros_like();
    std::vector<double> delta(d_key.begin(), d_key.end());
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& layer = params.layers[li];
        const auto& x = trace.inputs[li];
        const auto& z = trace.pre[li];
        if (x.size() != layer.in || z.size() != layer.out)
            throw InternalError("forward trace shape mismatch at layer " + std::to_string(li));
        if (layer.activation == Activation::relu)
            for (std::size_t r = 0; r < layer.out; ++r)
                if (!(z[r] > 0.0)) delta[r] = 0.0;

        auto& g = out.params.layers[li];
        for (std::size_t r = 0; r < layer.out; ++r) {
            g.bias[r] = delta[r];
            double* grow = g.weight.data() + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) grow[c] = delta[r] * x[c];
        }
        std::vector<double> prev(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r) {
            if (delta[r] == 0.0) continue;
            const double* row = layer.weight.data() + r * layer.in;
            for (std::size_t c = 0; c < layer.in; ++c) prev[c] += row[c] * delta[r];
        }
        delta = std::move(prev);
    }
    out.d_obs = std::move(delta);
    return out;
}

OptState::OptState(const EmbeddingParams& like, RmsPropConfig cfg) : nu(like.zeros_like()), config(cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("rmsprop learning rate must be positive");
    if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("rmsprop rho must lie in (0,1)");
    if (!(cfg.epsilon > 0.0)) throw ConfigError("rmsprop epsilon must be positive");
}

bool rmsprop_step(EmbeddingParams& params, const EmbeddingParams& grads, OptState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.nu))
        throw InputError("rmsprop: parameter, gradient and accumulator shapes differ");
    if (!grads.all_finite()) return false;
    const auto& cfg = state.config;
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& nu) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                nu[i] = cfg.rho * nu[i] + (1.0 - cfg.rho) * g[i] * g[i];
                theta[i] -= cfg.learning_rate * g[i] / (std::sqrt(nu[i]) + cfg.epsilon);
            }
        };
        update(params.layers[li].weight, grads.layers[li].weight, state.nu.layers[li].weight);
        update(params.layers[li].bias, grads.layers[li].bias, state.nu.layers[li].bias);
    }
    return true;
}

RandomProjection::RandomProjection(std::size_t key_dim, std::size_t obs_dim, std::uint64_t seed)
    : key_dim_(key_dim), obs_dim_(obs_dim), seed_(seed) {
    if (key_dim == 0 || obs_dim == 0) throw ConfigError("random projection dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
    matrix_.resize(key_dim * obs_dim);
    for (auto& m : matrix_) m = normal(rng) * scale;
}

RandomProjection::RandomProjection(std::size_t key_dim, std::size_t obs_dim, std::vector<double> matrix)
    : key_dim_(key_dim), obs_dim_(obs_dim), matrix_(std::move(matrix)) {
    if (matrix_.size() != key_dim * obs_dim) throw InputError("projection matrix has wrong size");
}

std::vector<double> RandomProjection::embed(std::span<const double> obs) const {
    if (obs.size() != obs_dim_)
        throw InputError("observation length " + std::to_string(obs.size()) + " does not match projection input " +
                         std::to_string(obs_dim_));
    std::vector<double> h(key_dim_, 0.0);
    for (std::size_t r = 0; r < key_dim_; ++r) {
        const double* row = matrix_.data() + r * obs_dim_;
        double acc = 0.0;
        for (std::size_t c = 0; c < obs_dim_; ++c) acc += row[c] * obs[c];
        h[r] = acc;
    }
    return h;
}

EmbeddingParams RandomProjection::as_params() const {
    DenseLayer layer;
    layer.in = obs_dim_;
    layer.out = key_dim_;
    layer.activation = Activation::identity;
    layer.weight = matrix_;
    layer.bias.assign(key_dim_, 0.0);
    EmbeddingParams params;
    params.layers.push_back(std::move(layer));
    return params;
}

void save_params(std::ostream& os, const EmbeddingParams& params) {
    os << "nec-embedding 1\n";
    os << "layers " << params.layers.size() << '\n';
    auto write_row = [&](const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) os << ' ';
            os << io::format_double(values[i]);
        }
        os << '\n';
    };
    for (const auto& layer : params.layers) {
        os << "dense " << layer.in << ' ' << layer.out << ' ' << to_string(layer.activation) << '\n';
        write_row(layer.weight);
        write_row(layer.bias);
    }
}

EmbeddingParams load_params(std::istream& is) {
    std::string tag;
    int version = 0;
    if (!(is >> tag >> version) || tag != "nec-embedding" || version != 1)
        throw IoError("not an embedding checkpoint");
    std::size_t n_layers = 0;
    if (!(is >> tag >> n_layers) || tag != "layers") throw IoError("embedding checkpoint: missing layer count");
    auto read_values = [&](std::size_t n) {
        std::vector<double> values(n);
        std::string token;
        for (auto& v : values) {
            if (!(is >> token)) throw IoError("embedding checkpoint truncated");
            v = io::parse_double(token);
        }
        return values;
    };
    EmbeddingParams params;
    for (std::size_t i = 0; i < n_layers; ++i) {
        DenseLayer layer;
        std::string act;
        if (!(is >> tag >> layer.in >> layer.out >> act) || tag != "dense")
            throw IoError("embedding checkpoint: bad layer header");
        layer.activation = parse_activation(act);
        layer.weight = read_values(layer.in * layer.out);
        layer.bias = read_values(layer.out);
        params.layers.push_back(std::move(layer));
    }
    for (std::size_t i = 1; i < params.layers.size(); ++i)
        if (params.layers[i].in != params.layers[i - 1].out) throw IoError("embedding checkpoint: broken shape chain");
    return params;
}

}  // namespace nec
