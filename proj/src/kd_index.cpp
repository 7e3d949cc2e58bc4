#include "nec/kd_index.hpp"

#include "nec/error.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace nec {

// Bounded max-heap on (distance2, id); top() is the current worst kept result.
class KdIndex::Best {
public:
    explicit Best(std::size_t capacity) : capacity_(capacity) { heap_.reserve(capacity + 1); }

    bool full() const { return heap_.size() >= capacity_; }
    double worst() const { return heap_.front().distance2; }
    bool empty() const { return heap_.empty(); }

    void offer(KeyId id, double d2) {
        const Neighbor n{id, d2};
        if (!full()) {
            heap_.push_back(n);
            std::push_heap(heap_.begin(), heap_.end(), neighbor_less);
        } else if (neighbor_less(n, heap_.front())) {
            std::pop_heap(heap_.begin(), heap_.end(), neighbor_less);
            heap_.back() = n;
            std::push_heap(heap_.begin(), heap_.end(), neighbor_less);
        }
    }

    std::vector<Neighbor> sorted() && {
        std::sort_heap(heap_.begin(), heap_.end(), neighbor_less);
        return std::move(heap_);
    }

private:
    std::size_t capacity_;
    std::vector<Neighbor> heap_;
};

KdIndex::KdIndex(std::size_t dim, KdIndexOptions options) : dim_(dim), options_(options) {
    if (dim == 0) throw InputError("kd index dimension must be positive");
    if (options_.rebuild_threshold == 0) throw ConfigError("rebuild_threshold must be positive");
    if (options_.leaf_size == 0) options_.leaf_size = 1;
}

KdIndex KdIndex::build(std::size_t dim, std::span<const std::pair<KeyId, std::vector<double>>> keys,
                       KdIndexOptions options) {
    KdIndex index(dim, options);
    for (const auto& [id, key] : keys) {
        if (key.size() != dim) throw InputError("kd build: mixed key dimensions");
        if (index.slot_of_.count(id)) throw InternalError("kd build: duplicate KeyId " + std::to_string(id));
        const auto slot = static_cast<std::uint32_t>(index.slot_ids_.size());
        index.slot_ids_.push_back(id);
        index.points_.insert(index.points_.end(), key.begin(), key.end());
        index.state_.push_back(SlotState::loose_new);
        index.loose_.push_back(slot);
        index.slot_of_.emplace(id, slot);
    }
    index.rebuild();
    return index;
}

double KdIndex::distance2(std::uint32_t slot, std::span<const double> q) const {
    const double* p = point(slot);
    double acc = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
        const double diff = q[d] - p[d];
        acc += diff * diff;
    }
    return acc;
}

std::span<const double> KdIndex::key(KeyId id) const {
    auto it = slot_of_.find(id);
    if (it == slot_of_.end()) throw InternalError("kd index: unknown KeyId " + std::to_string(id));
    return {point(it->second), dim_};
}

void KdIndex::insert(KeyId id, std::span<const double> key) {
    if (key.size() != dim_) throw InputError("kd insert: key has wrong dimension");
    if (slot_of_.count(id)) throw InternalError("kd insert: duplicate KeyId " + std::to_string(id));
    const auto slot = static_cast<std::uint32_t>(slot_ids_.size());
    slot_ids_.push_back(id);
    points_.insert(points_.end(), key.begin(), key.end());
    state_.push_back(SlotState::loose_new);
    loose_.push_back(slot);
    slot_of_.emplace(id, slot);
    if (loose_.size() >= options_.rebuild_threshold) rebuild();
}

void KdIndex::update_key(KeyId id, std::span<const double> key) {
    if (key.size() != dim_) throw InputError("kd update: key has wrong dimension");
    auto it = slot_of_.find(id);
    if (it == slot_of_.end()) throw InternalError("kd update: unknown KeyId " + std::to_string(id));
    const auto slot = it->second;
    std::copy(key.begin(), key.end(), points_.begin() + std::ptrdiff_t(slot) * std::ptrdiff_t(dim_));
    // Small moves usually stay inside the key's leaf cell; the tree is then still
    // exact and the key does not need the linear-scan list.
    if (state_[slot] == SlotState::tree && !fits_leaf(slot)) {
        state_[slot] = SlotState::loose_moved;
        loose_.push_back(slot);
        ++moved_;
    }
    dirty_ = true;
}

bool KdIndex::fits_leaf(std::uint32_t slot) const {
    std::uint32_t child = leaf_of_[slot];
    for (std::uint32_t node = nodes_[child].parent; node != npos; child = node, node = nodes_[node].parent) {
        const Node& n = nodes_[node];
        const double v = point(slot)[n.dim];
        if (child == n.left ? v > n.split : v < n.split) return false;
    }
    return true;
}

void KdIndex::rebuild() {
    leaf_slots_.resize(slot_ids_.size());
    std::iota(leaf_slots_.begin(), leaf_slots_.end(), 0u);
    nodes_.clear();
    depth_ = 0;
    leaf_of_.assign(slot_ids_.size(), npos);
    root_ = leaf_slots_.empty() ? npos : build_node(0, static_cast<std::uint32_t>(leaf_slots_.size()), 1);
    std::fill(state_.begin(), state_.end(), SlotState::tree);
    loose_.clear();
    moved_ = 0;
    dirty_ = false;
    ++rebuilds_;
}

bool KdIndex::rebuild_if_stale() {
    const bool too_loose = loose_.size() >= options_.rebuild_threshold;
    const bool too_moved =
        moved_ > 0 && static_cast<double>(moved_) >= options_.moved_fraction * static_cast<double>(size());
    if (too_loose || too_moved) {
        rebuild();
        return true;
    }
    return false;
}

std::uint32_t KdIndex::build_node(std::uint32_t begin, std::uint32_t end, std::size_t level) {
    depth_ = std::max(depth_, level);
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    const std::uint32_t count = end - begin;

    // Widest-spread dimension; lowest dimension wins ties.
    std::uint32_t best_dim = 0;
    double best_spread = -1.0;
    if (count > options_.leaf_size) {
        for (std::size_t d = 0; d < dim_; ++d) {
            double lo = point(leaf_slots_[begin])[d];
            double hi = lo;
            for (std::uint32_t i = begin + 1; i < end; ++i) {
                const double v = point(leaf_slots_[i])[d];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                best_dim = static_cast<std::uint32_t>(d);
            }
        }
    }
    if (count <= options_.leaf_size || best_spread <= 0.0) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        for (std::uint32_t i = begin; i < end; ++i) leaf_of_[leaf_slots_[i]] = id;
        return id;
    }

    const std::uint32_t mid = begin + count / 2;
    auto less = [&](std::uint32_t a, std::uint32_t b) {
        const double va = point(a)[best_dim];
        const double vb = point(b)[best_dim];
        return va < vb || (va == vb && a < b);
    };
    std::nth_element(leaf_slots_.begin() + begin, leaf_slots_.begin() + mid, leaf_slots_.begin() + end, less);
    const double split = point(leaf_slots_[mid])[best_dim];
    const std::uint32_t left = build_node(begin, mid, level + 1);
    const std::uint32_t right = build_node(mid, end, level + 1);
    nodes_[id].dim = best_dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    nodes_[left].parent = id;
    nodes_[right].parent = id;
    return id;
}

// `lower_bound` is the squared distance from q to the node's cell, maintained
// incrementally from the per-dimension offsets to the cell's split planes.
void KdIndex::search(std::uint32_t node_id, std::span<const double> q, double lower_bound,
                     std::vector<double>& offsets, Best& best, std::size_t& visits, std::size_t budget) const {
    if (visits >= budget && best.full()) return;
    ++visits;
    const Node& node = nodes_[node_id];
    if (node.left == npos) {
        for (std::uint32_t i = node.begin; i < node.end; ++i) {
            const std::uint32_t slot = leaf_slots_[i];
            if (state_[slot] != SlotState::tree) continue;
            best.offer(slot_ids_[slot], distance2(slot, q));
        }
        return;
    }
    const double diff = q[node.dim] - node.split;
    const std::uint32_t near = diff < 0.0 ? node.left : node.right;
    const std::uint32_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, lower_bound, offsets, best, visits, budget);
    const double old = offsets[node.dim];
    const double far_bound = lower_bound - old * old + diff * diff;
    // <= keeps boundary ties reachable so the KeyId tie rule is honoured.
    if (!best.full() || far_bound <= best.worst()) {
        offsets[node.dim] = diff;
        search(far, q, far_bound, offsets, best, visits, budget);
        offsets[node.dim] = old;
    }
}

std::vector<Neighbor> KdIndex::query(std::span<const double> q, int p, SearchMode mode) const {
    if (p <= 0) throw InputError("query_knn: p must be positive");
    if (q.size() != dim_) throw InputError("query_knn: query has wrong dimension");
    Best best(static_cast<std::size_t>(p));
    if (root_ != npos) {
        std::size_t visits = 0;
        const std::size_t budget = mode == SearchMode::exact
                                       ? static_cast<std::size_t>(-1)
                                       : options_.visit_budget_factor * std::max<std::size_t>(depth_, 1);
        std::vector<double> offsets(dim_, 0.0);
        search(root_, q, 0.0, offsets, best, visits, budget);
    }
    for (std::uint32_t slot : loose_) best.offer(slot_ids_[slot], distance2(slot, q));
    return std::move(best).sorted();
}

std::vector<KeyId> KdIndex::ids() const {
    std::vector<KeyId> out = slot_ids_;
    std::sort(out.begin(), out.end());
    return out;
}

bool KdIndex::check_invariants() const {
    // Every slot is exactly once in (tree-state slots under some leaf) + loose list.
    std::vector<int> seen(slot_ids_.size(), 0);
    for (std::uint32_t slot : loose_) {
        if (slot >= seen.size() || state_[slot] == SlotState::tree) return false;
        ++seen[slot];
    }
    if (leaf_slots_.size() > slot_ids_.size()) return false;
    for (std::uint32_t slot : leaf_slots_)
        if (state_[slot] == SlotState::tree) ++seen[slot];
    for (std::size_t s = 0; s < seen.size(); ++s) {
        if (seen[s] != 1) return false;
        if (slot_of_.at(slot_ids_[s]) != s) return false;
    }
    // Split invariant for keys still in the tree.
    bool ok = true;
    auto check = [&](auto&& self, std::uint32_t id, std::vector<std::pair<std::uint32_t, std::pair<double, bool>>>& bounds) -> void {
        const Node& n = nodes_[id];
        if (n.left == npos) {
            for (std::uint32_t i = n.begin; i < n.end; ++i) {
                const std::uint32_t slot = leaf_slots_[i];
                if (state_[slot] != SlotState::tree) continue;
                for (const auto& [d, b] : bounds) {
                    const double v = point(slot)[d];
                    if (b.second ? v > b.first : v < b.first) ok = false;
                }
            }
            return;
        }
        bounds.push_back({n.dim, {n.split, true}});
        self(self, n.left, bounds);
        bounds.back().second.second = false;
        self(self, n.right, bounds);
        bounds.pop_back();
    };
    if (root_ != npos) {
        std::vector<std::pair<std::uint32_t, std::pair<double, bool>>> bounds;
        check(check, root_, bounds);
    }
    return ok;
}

}  // namespace nec
