#include "nec/dnd.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace nec {

void DndConfig::validate() const {
    if (p < 1) throw ConfigError("dnd.p must be >= 1");
    if (capacity < static_cast<std::size_t>(p)) throw ConfigError("dnd.capacity must be >= dnd.p");
    if (!(delta > 0.0)) throw ConfigError("dnd.delta must be positive");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("dnd.alpha must lie in (0, 1]");
    if (!(exact_match_eps >= 0.0)) throw ConfigError("dnd.exact_match_eps must be >= 0");
    if (rebuild_threshold == 0) throw ConfigError("dnd.rebuild_threshold must be positive");
}

double kernel(std::span<const double> h, std::span<const double> h_i, double delta) {
    if (h.size() != h_i.size()) throw InputError("kernel: dimension mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double diff = h[i] - h_i[i];
        d2 += diff * diff;
    }
    return kernel_from_distance2(d2, delta);
}

namespace {

KdIndexOptions index_options(const DndConfig& cfg) {
    KdIndexOptions opts;
    opts.rebuild_threshold = cfg.rebuild_threshold;
    return opts;
}

}  // namespace

DndMemory::DndMemory(std::size_t key_dim, DndConfig config)
    : config_(config), store_(key_dim, (config.validate(), config.capacity), index_options(config)) {}

LookupTrace DndMemory::compute(std::span<const double> h, int p, SearchMode mode) const {
    if (store_.empty()) throw EmptyMemoryError("DND lookup on an empty memory");
    if (h.size() != key_dim()) throw InputError("DND lookup: key has wrong dimension");
    const auto neighbours = store_.nearest(h, p, mode);

    LookupTrace t;
    t.query.assign(h.begin(), h.end());
    t.key_epoch = store_.key_epoch();
    const std::size_t n = neighbours.size();
    t.ids.resize(n);
    t.distances2.resize(n);
    t.kernels.resize(n);
    t.weights.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t.ids[i] = neighbours[i].id;
        t.distances2[i] = neighbours[i].distance2;
        t.kernels[i] = kernel_from_distance2(neighbours[i].distance2, config_.delta);
        total += t.kernels[i];
    }
    double out = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        t.weights[i] = t.kernels[i] / total;
        out += t.weights[i] * store_.value(t.ids[i]);
    }
    t.output = out;
    return t;
}

LookupTrace DndMemory::lookup(std::span<const double> h) { return lookup(h, config_.p, config_.search); }

LookupTrace DndMemory::lookup(std::span<const double> h, int p, SearchMode mode) {
    LookupTrace t = compute(h, p, mode);
    store_.touch(t.ids);
    return t;
}

LookupTrace DndMemory::peek(std::span<const double> h) const { return compute(h, config_.p, config_.search); }

LookupTrace DndMemory::peek(std::span<const double> h, int p, SearchMode mode) const {
    return compute(h, p, mode);
}

LookupGradients DndMemory::lookup_backward(const LookupTrace& trace, double d_output) const {
    if (trace.key_epoch != store_.key_epoch()) throw InternalError("DND backward: stale lookup trace");
    const std::size_t n = trace.ids.size();
    const std::size_t dim = key_dim();
    LookupGradients g;
    g.d_query.assign(dim, 0.0);
    g.d_keys.assign(n * dim, 0.0);
    g.d_values.assign(n, 0.0);
    if (n == 0) return g;

    double total = 0.0;
    for (double k : trace.kernels) total += k;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = store_.value(trace.ids[i]);
        g.d_values[i] = d_output * trace.weights[i];
        // dL/dk_i = g (v_i - o) / sum_k ; dk_i/dd_i = -k_i^2
        const double d_kernel = d_output * (v - trace.output) / total;
        const double d_dist = -d_kernel * trace.kernels[i] * trace.kernels[i];
        if (d_dist == 0.0) continue;
        const auto key = store_.key(trace.ids[i]);
        for (std::size_t d = 0; d < dim; ++d) {
            const double diff = 2.0 * (trace.query[d] - key[d]);
            g.d_query[d] += d_dist * diff;
            g.d_keys[i * dim + d] = -d_dist * diff;
        }
    }
    return g;
}

WriteOutcome DndMemory::write(std::span<const double> h, double target) {
    if (h.size() != key_dim()) throw InputError("DND write: key has wrong dimension");
    if (!std::isfinite(target)) throw InputError("DND write: non-finite target");
    for (double v : h)
        if (!std::isfinite(v)) throw InputError("DND write: non-finite key");

    if (!store_.empty()) {
        const auto nearest = store_.nearest(h, 1, SearchMode::exact);
        if (!nearest.empty() && nearest.front().distance2 <= config_.exact_match_eps) {
            const KeyId id = nearest.front().id;
            // Same update as V + alpha (target - V), written so the residual
            // (V - target) contracts by exactly one rounded multiply.
            const double v = store_.value(id);
            store_.set_value(id, target + (1.0 - config_.alpha) * (v - target));
            const KeyId touched[] = {id};
            store_.touch(touched);
            return {WriteKind::updated, id};
        }
    }
    if (!store_.full()) {
        const KeyId id = store_.append(h, target);
        return {WriteKind::appended, id};
    }
    const KeyId victim = store_.lru_victim();
    store_.overwrite(victim, h, target);
    return {WriteKind::evicted_and_appended, victim};
}

void DndMemory::apply_gradients(std::span<const KeyId> ids, std::span<const double> d_keys,
                                std::span<const double> d_values, double learning_rate) {
    const std::size_t dim = key_dim();
    if (d_keys.size() != ids.size() * dim || d_values.size() != ids.size())
        throw InputError("DND apply_gradients: gradient shapes do not match ids");
    std::vector<double> key(dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const KeyId id = ids[i];
        if (id >= store_.size()) throw InternalError("DND apply_gradients: unknown KeyId " + std::to_string(id));
        if (d_values[i] != 0.0) store_.set_value(id, store_.value(id) - learning_rate * d_values[i]);
        bool moved = false;
        const auto current = store_.key(id);
        for (std::size_t d = 0; d < dim; ++d) {
            const double g = d_keys[i * dim + d];
            key[d] = current[d] - learning_rate * g;
            moved = moved || g != 0.0;
        }
        if (moved) store_.set_key(id, key);
    }
}

void DndMemory::set_entry(KeyId id, std::span<const double> key, double value) {
    store_.set_key(id, key);
    store_.set_value(id, value);
}

void DndMemory::save(std::ostream& os) const {
    io::write_magic(os, "NECDND01");
    io::write_u64(os, static_cast<std::uint64_t>(config_.p));
    io::write_f64(os, config_.delta);
    io::write_f64(os, config_.alpha);
    io::write_f64(os, config_.exact_match_eps);
    io::write_u64(os, config_.search == SearchMode::exact ? 0 : 1);
    io::write_u64(os, config_.rebuild_threshold);
    store_.save(os);
}

DndMemory DndMemory::load(std::istream& is) {
    io::expect_magic(is, "NECDND01");
    DndConfig cfg;
    cfg.p = static_cast<int>(io::read_u64(is));
    cfg.delta = io::read_f64(is);
    cfg.alpha = io::read_f64(is);
    cfg.exact_match_eps = io::read_f64(is);
    cfg.search = io::read_u64(is) == 0 ? SearchMode::exact : SearchMode::approximate;
    cfg.rebuild_threshold = io::read_u64(is);
    auto store = MemoryStore::load(is, index_options(cfg));
    cfg.capacity = store.capacity();
    DndMemory dnd(store.key_dim(), cfg);
    dnd.store_ = std::move(store);
    return dnd;
}

}  // namespace nec
