#pragma once

// Append-only key/value arrays with a kd index and least-recently-neighboured
// bookkeeping. Shared by the DND and the MFEC memory.

#include "nec/kd_index.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nec {

struct MemoryStats {
    std::size_t size = 0;
    std::size_t capacity = 0;
    std::size_t key_dim = 0;
    std::uint64_t clock = 0;
    double value_min = 0.0;
    double value_max = 0.0;
    double value_mean = 0.0;
    double value_stddev = 0.0;
    std::vector<std::size_t> value_histogram;  // 10 equal-width bins over [min, max]
    std::vector<std::size_t> age_histogram;     // bin b: clock - last_used in [2^b - 1, 2^(b+1) - 1)

    std::string to_text() const;
};

class MemoryStore {
public:
    MemoryStore(std::size_t key_dim, std::size_t capacity, KdIndexOptions index_options = {});

    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    bool full() const { return values_.size() >= capacity_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t key_dim() const { return key_dim_; }

    std::span<const double> key(KeyId id) const;
    double value(KeyId id) const { return values_.at(id); }
    std::uint64_t last_used(KeyId id) const { return last_used_.at(id); }
    std::span<const double> values() const { return values_; }
    std::span<const std::uint64_t> timestamps() const { return last_used_; }

    /// Monotone event counter; each stamping event consumes one tick.
    std::uint64_t clock() const { return clock_; }
    /// Incremented whenever any stored key vector changes.
    std::uint64_t key_epoch() const { return key_epoch_; }

    /// Requires !full(). New entry is stamped with the current tick.
    KeyId append(std::span<const double> key, double value);
    /// Replaces an entry (eviction); stamps it.
    void overwrite(KeyId id, std::span<const double> key, double value);
    void set_value(KeyId id, double value);
    void set_key(KeyId id, std::span<const double> key);
    /// Stamps every id with one shared tick.
    void touch(std::span<const KeyId> ids);

    /// Entry with minimal last_used, lowest id on ties.
    KeyId lru_victim() const;

    std::vector<Neighbor> nearest(std::span<const double> q, int p, SearchMode mode) const;

    const KdIndex& index() const { return index_; }
    bool maintain_index() { return index_.rebuild_if_stale(); }
    void rebuild_index() { index_.rebuild(); }

    MemoryStats stats() const;

    // Binary body: u64 key_dim, capacity, size, clock, key_epoch; then size*key_dim
    // f64 keys, size f64 values, size u64 timestamps (all little-endian).
    void save(std::ostream& os) const;
    static MemoryStore load(std::istream& is, KdIndexOptions index_options = {});

private:
    // Recency list ordered by (last_used, id): head is the eviction victim.
    // Stamping always uses a tick newer than every stored one, so moving the id
    // to the tail keeps the order without any search.
    static constexpr KeyId npos = static_cast<KeyId>(-1);
    void unlink(KeyId id);
    void link_back(KeyId id);

    std::size_t key_dim_;
    std::size_t capacity_;
    std::vector<double> keys_;
    std::vector<double> values_;
    std::vector<std::uint64_t> last_used_;
    std::vector<KeyId> prev_;
    std::vector<KeyId> next_;
    KeyId head_ = npos;
    KeyId tail_ = npos;
    KdIndex index_;
    std::uint64_t clock_ = 0;
    std::uint64_t key_epoch_ = 0;
};

}  // namespace nec
