#pragma once

// kd-tree p-nearest-neighbour index over key vectors.
//
// Keys live in a contiguous slot array. The tree covers the keys present at the
// last rebuild; keys inserted since, and keys whose vectors moved since, sit in a
// "loose" list that every query scans linearly. Because moved keys leave the tree
// until the next rebuild, exact mode stays exact under any insert/update
// schedule, and distances are always computed from current vectors.

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace nec {

using KeyId = std::uint32_t;

enum class SearchMode { exact, approximate };

struct Neighbor {
    KeyId id = 0;
    double distance2 = 0.0;  // squared L2

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Lexicographic on (distance2, id): the result order and tie rule.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
    return a.distance2 < b.distance2 || (a.distance2 == b.distance2 && a.id < b.id);
}

struct KdIndexOptions {
    std::size_t rebuild_threshold = 1024;  // loose keys that force a rebuild
    std::size_t leaf_size = 8;
    std::size_t visit_budget_factor = 8;   // approximate mode: node visits <= factor * depth
    double moved_fraction = 0.1;           // rebuild_if_stale(): moved/size that forces a rebuild
};

class KdIndex {
public:
    explicit KdIndex(std::size_t dim, KdIndexOptions options = {});

    /// Balanced tree over `keys` (median split on the widest-spread dimension).
    static KdIndex build(std::size_t dim, std::span<const std::pair<KeyId, std::vector<double>>> keys,
                         KdIndexOptions options = {});

    /// Visible immediately. Rebuilds once the loose list reaches rebuild_threshold.
    void insert(KeyId id, std::span<const double> key);

    /// Replaces the stored vector. A key that still lies inside its leaf's cell
    /// stays in the tree; otherwise it joins the loose list until the next rebuild.
    void update_key(KeyId id, std::span<const double> key);

    void rebuild();

    /// Rebuilds when the loose list is at the threshold or >= moved_fraction of
    /// keys moved since the last rebuild. Returns whether a rebuild happened.
    bool rebuild_if_stale();

    /// At most p results ascending by (distance2, id). Throws InputError if p <= 0
    /// or the query has the wrong dimension.
    std::vector<Neighbor> query(std::span<const double> q, int p, SearchMode mode = SearchMode::exact) const;

    bool contains(KeyId id) const { return slot_of_.count(id) != 0; }
    std::span<const double> key(KeyId id) const;
    std::size_t size() const { return slot_ids_.size(); }
    std::size_t dim() const { return dim_; }
    bool dirty() const { return dirty_; }
    std::size_t loose_count() const { return loose_.size(); }
    std::size_t pending_inserts() const { return loose_.size() - moved_; }
    std::size_t moved_count() const { return moved_; }
    std::size_t depth() const { return depth_; }
    std::size_t tree_size() const { return leaf_slots_.size(); }
    std::uint64_t rebuild_count() const { return rebuilds_; }
    const KdIndexOptions& options() const { return options_; }

    /// All ids, ascending.
    std::vector<KeyId> ids() const;

    /// Checks the structural invariants: every id once across tree + loose, and
    /// left <= split <= right on every split. Used by tests.
    bool check_invariants() const;

private:
    static constexpr std::uint32_t npos = 0xffffffffu;

    struct Node {
        double split = 0.0;
        std::uint32_t dim = 0;
        std::uint32_t left = npos;  // npos => leaf
        std::uint32_t right = npos;
        std::uint32_t begin = 0;  // leaf range into leaf_slots_
        std::uint32_t end = 0;
        std::uint32_t parent = npos;
    };

    enum class SlotState : std::uint8_t { tree, loose_new, loose_moved };

    class Best;

    const double* point(std::uint32_t slot) const { return points_.data() + std::size_t(slot) * dim_; }
    double distance2(std::uint32_t slot, std::span<const double> q) const;
    std::uint32_t build_node(std::uint32_t begin, std::uint32_t end, std::size_t level);
    void search(std::uint32_t node, std::span<const double> q, double lower_bound, std::vector<double>& offsets,
                Best& best, std::size_t& visits, std::size_t budget) const;
    bool fits_leaf(std::uint32_t slot) const;

    std::size_t dim_;
    KdIndexOptions options_;
    std::vector<double> points_;
    std::vector<KeyId> slot_ids_;
    std::vector<SlotState> state_;
    std::unordered_map<KeyId, std::uint32_t> slot_of_;
    std::vector<std::uint32_t> loose_;
    std::size_t moved_ = 0;
    bool dirty_ = false;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> leaf_slots_;
    std::vector<std::uint32_t> leaf_of_;  // per slot: leaf node holding it (tree slots only)
    std::uint32_t root_ = npos;
    std::size_t depth_ = 0;
    std::uint64_t rebuilds_ = 0;
};

}  // namespace nec
