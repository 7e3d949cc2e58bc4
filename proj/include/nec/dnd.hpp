#pragma once

// Differentiable Neural Dictionary: one per action. Kernel-weighted lookup over
// the p nearest stored keys, tabular fast update on exact key matches, and a
// backward pass into the query key, the neighbour keys and the neighbour values.

#include "nec/memory_store.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace nec {

struct DndConfig {
    std::size_t capacity = 50000;
    int p = 50;
    double delta = 1e-3;
    double alpha = 0.1;
    double exact_match_eps = 1e-10;  // squared distance treated as "same key"
    SearchMode search = SearchMode::exact;
    std::size_t rebuild_threshold = 1024;

    /// Throws ConfigError on out-of-range fields.
    void validate() const;
};

/// k(h, h_i) = 1 / (||h - h_i||^2 + delta)
double kernel(std::span<const double> h, std::span<const double> h_i, double delta);
inline double kernel_from_distance2(double d2, double delta) { return 1.0 / (d2 + delta); }

struct LookupTrace {
    std::vector<double> query;
    std::vector<KeyId> ids;
    std::vector<double> distances2;
    std::vector<double> kernels;
    std::vector<double> weights;
    double output = 0.0;
    std::uint64_t key_epoch = 0;
};

struct LookupGradients {
    std::vector<double> d_query;   // key_dim
    std::vector<double> d_keys;    // ids.size() x key_dim, row-major
    std::vector<double> d_values;  // ids.size()
};

enum class WriteKind { appended, updated, evicted_and_appended };

struct WriteOutcome {
    WriteKind kind = WriteKind::appended;
    KeyId id = 0;

    friend bool operator==(const WriteOutcome&, const WriteOutcome&) = default;
};

class DndMemory {
public:
    DndMemory(std::size_t key_dim, DndConfig config);

    const DndConfig& config() const { return config_; }
    std::size_t size() const { return store_.size(); }
    bool empty() const { return store_.empty(); }
    std::size_t key_dim() const { return store_.key_dim(); }

    /// Lookup with the configured p and search mode; stamps the neighbours.
    /// Throws EmptyMemoryError on an empty memory.
    LookupTrace lookup(std::span<const double> h);
    LookupTrace lookup(std::span<const double> h, int p, SearchMode mode);

    /// Same result as lookup() without touching any state.
    LookupTrace peek(std::span<const double> h) const;
    LookupTrace peek(std::span<const double> h, int p, SearchMode mode) const;

    /// Gradients of L through o = sum w_i v_i given dL/do. Throws InternalError
    /// if any key moved since the trace was taken.
    LookupGradients lookup_backward(const LookupTrace& trace, double d_output) const;

    /// Exact match (squared distance <= exact_match_eps): V <- V + alpha (target - V).
    /// Otherwise append, evicting the least recently neighboured entry at capacity.
    WriteOutcome write(std::span<const double> h, double target);

    /// Plain SGD step on the listed entries. d_keys is ids.size() x key_dim.
    /// Keys with an all-zero gradient are left in place (index stays clean).
    void apply_gradients(std::span<const KeyId> ids, std::span<const double> d_keys,
                         std::span<const double> d_values, double learning_rate);

    /// Rebuilds the kd index when it has gone stale. Returns whether it rebuilt.
    bool maintain_index() { return store_.maintain_index(); }

    std::span<const double> key(KeyId id) const { return store_.key(id); }
    double value(KeyId id) const { return store_.value(id); }
    std::uint64_t last_neighbour_time(KeyId id) const { return store_.last_used(id); }
    void set_entry(KeyId id, std::span<const double> key, double value);

    const MemoryStore& store() const { return store_; }
    MemoryStats stats() const { return store_.stats(); }

    // Snapshot: magic "NECDND01", u64 p, f64 delta, f64 alpha, f64 exact_match_eps,
    // u64 search (0 exact, 1 approximate), u64 rebuild_threshold, then the
    // MemoryStore body. The tree is rebuilt on load.
    void save(std::ostream& os) const;
    static DndMemory load(std::istream& is);

private:
    LookupTrace compute(std::span<const double> h, int p, SearchMode mode) const;

    DndConfig config_;
    MemoryStore store_;
};

}  // namespace nec
