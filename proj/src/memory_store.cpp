#include "nec/memory_store.hpp"

#include "nec/binary_io.hpp"
#include "nec/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nec {

MemoryStore::MemoryStore(std::size_t key_dim, std::size_t capacity, KdIndexOptions index_options)
    : key_dim_(key_dim), capacity_(capacity), index_(key_dim, index_options) {
    if (capacity == 0) throw ConfigError("memory capacity must be positive");
}

std::span<const double> MemoryStore::key(KeyId id) const {
    if (id >= values_.size()) throw InternalError("memory: unknown KeyId " + std::to_string(id));
    return {keys_.data() + std::size_t(id) * key_dim_, key_dim_};
}

void MemoryStore::unlink(KeyId id) {
    const KeyId p = prev_[id], n = next_[id];
    (p == npos ? head_ : next_[p]) = n;
    (n == npos ? tail_ : prev_[n]) = p;
    prev_[id] = next_[id] = npos;
}

void MemoryStore::link_back(KeyId id) {
    prev_[id] = tail_;
    next_[id] = npos;
    (tail_ == npos ? head_ : next_[tail_]) = id;
    tail_ = id;
}

KeyId MemoryStore::append(std::span<const double> key, double value) {
    if (key.size() != key_dim_) throw InputError("memory append: key has wrong dimension");
    if (full()) throw InternalError("memory append past capacity");
    const auto id = static_cast<KeyId>(values_.size());
    keys_.insert(keys_.end(), key.begin(), key.end());
    values_.push_back(value);
    const std::uint64_t tick = clock_++;
    last_used_.push_back(tick);
    prev_.push_back(npos);
    next_.push_back(npos);
    link_back(id);
    index_.insert(id, key);
    return id;
}

void MemoryStore::overwrite(KeyId id, std::span<const double> key, double value) {
    set_key(id, key);
    values_[id] = value;
    last_used_[id] = clock_++;
    unlink(id);
    link_back(id);
}

void MemoryStore::set_value(KeyId id, double value) {
    if (id >= values_.size()) throw InternalError("memory: unknown KeyId " + std::to_string(id));
    values_[id] = value;
}

void MemoryStore::set_key(KeyId id, std::span<const double> key) {
    if (id >= values_.size()) throw InternalError("memory: unknown KeyId " + std::to_string(id));
    if (key.size() != key_dim_) throw InputError("memory: key has wrong dimension");
    std::copy(key.begin(), key.end(), keys_.begin() + std::ptrdiff_t(id) * std::ptrdiff_t(key_dim_));
    index_.update_key(id, key);
    ++key_epoch_;
}

void MemoryStore::touch(std::span<const KeyId> ids) {
    if (ids.empty()) return;
    for (KeyId id : ids)
        if (id >= values_.size()) throw InternalError("memory: unknown KeyId " + std::to_string(id));
    // Ids sharing a tick are ordered by id, so relink them in ascending order.
    std::vector<KeyId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    const std::uint64_t tick = clock_++;
    for (KeyId id : sorted) {
        last_used_[id] = tick;
        unlink(id);
        link_back(id);
    }
}

KeyId MemoryStore::lru_victim() const {
    if (head_ == npos) throw EmptyMemoryError("memory is empty");
    return head_;
}

std::vector<Neighbor> MemoryStore::nearest(std::span<const double> q, int p, SearchMode mode) const {
    return index_.query(q, p, mode);
}

MemoryStats MemoryStore::stats() const {
    MemoryStats s;
    s.size = size();
    s.capacity = capacity_;
    s.key_dim = key_dim_;
    s.clock = clock_;
    s.value_histogram.assign(10, 0);
    if (values_.empty()) return s;
    s.value_min = *std::min_element(values_.begin(), values_.end());
    s.value_max = *std::max_element(values_.begin(), values_.end());
    double sum = 0.0;
    for (double v : values_) sum += v;
    s.value_mean = sum / static_cast<double>(values_.size());
    double var = 0.0;
    for (double v : values_) var += (v - s.value_mean) * (v - s.value_mean);
    s.value_stddev = std::sqrt(var / static_cast<double>(values_.size()));
    const double width = s.value_max - s.value_min;
    for (double v : values_) {
        std::size_t bin = width > 0.0 ? static_cast<std::size_t>((v - s.value_min) / width * 10.0) : 0;
        s.value_histogram[std::min<std::size_t>(bin, 9)]++;
    }
    for (std::uint64_t t : last_used_) {
        const std::uint64_t age = clock_ - t;
        std::size_t bin = 0;
        while ((std::uint64_t{2} << bin) - 1 <= age) ++bin;
        if (s.age_histogram.size() <= bin) s.age_histogram.resize(bin + 1, 0);
        s.age_histogram[bin]++;
    }
    return s;
}

std::string MemoryStats::to_text() const {
    std::ostringstream os;
    os << "size " << size << " / " << capacity << "  key_dim " << key_dim << "  clock " << clock << '\n';
    if (size == 0) return os.str();
    os << "values min " << io::format_double(value_min) << " max " << io::format_double(value_max) << " mean "
       << io::format_double(value_mean) << " stddev " << io::format_double(value_stddev) << '\n';
    os << "value histogram:";
    for (auto c : value_histogram) os << ' ' << c;
    os << '\n' << "age histogram (log2 bins):";
    for (auto c : age_histogram) os << ' ' << c;
    os << '\n';
    return os.str();
}

void MemoryStore::save(std::ostream& os) const {
    io::write_u64(os, key_dim_);
    io::write_u64(os, capacity_);
    io::write_u64(os, values_.size());
    io::write_u64(os, clock_);
    io::write_u64(os, key_epoch_);
    io::write_f64s(os, keys_);
    io::write_f64s(os, values_);
    for (auto t : last_used_) io::write_u64(os, t);
}

MemoryStore MemoryStore::load(std::istream& is, KdIndexOptions index_options) {
    const auto key_dim = io::read_u64(is);
    const auto capacity = io::read_u64(is);
    const auto size = io::read_u64(is);
    if (key_dim == 0 || size > capacity) throw IoError("memory snapshot: inconsistent header");
    MemoryStore store(key_dim, capacity, index_options);
    store.clock_ = io::read_u64(is);
    store.key_epoch_ = io::read_u64(is);
    store.keys_ = io::read_f64s(is, size * key_dim);
    store.values_ = io::read_f64s(is, size);
    store.last_used_.resize(size);
    for (auto& t : store.last_used_) t = io::read_u64(is);
    std::vector<KeyId> order(size);
    for (std::size_t i = 0; i < size; ++i) order[i] = static_cast<KeyId>(i);
    std::sort(order.begin(), order.end(), [&](KeyId a, KeyId b) {
        return std::pair(store.last_used_[a], a) < std::pair(store.last_used_[b], b);
    });
    store.prev_.assign(size, npos);
    store.next_.assign(size, npos);
    for (KeyId id : order) {
        if (store.last_used_[id] >= store.clock_) throw IoError("memory snapshot: timestamp ahead of clock");
        store.link_back(id);
    }
    std::vector<std::pair<KeyId, std::vector<double>>> keys;
    keys.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const auto id = static_cast<KeyId>(i);
        auto k = store.key(id);
        keys.emplace_back(id, std::vector<double>(k.begin(), k.end()));
    }
    store.index_ = KdIndex::build(key_dim, keys, index_options);
    return store;
}

}  // namespace nec
