#include "nec/error.hpp"
#include "nec/kd_index.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <map>
#include <random>

using namespace nec;

namespace {

void check_against_scan(const KdIndex& index, const std::map<std::uint64_t, oracle::Vec>& shadow,
                        const oracle::Vec& q, int p) {
    const auto got = index.query(q, p, SearchMode::exact);
    const auto want = oracle::linear_knn(shadow, q, p);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == want[i].first);
        CHECK(got[i].distance2 == want[i].second);
    }
}

oracle::Vec grid_point(std::mt19937_64& rng, std::size_t dim) {
    // Small integer lattice: many exact distance ties.
    std::uniform_int_distribution<int> u(-2, 2);
    oracle::Vec v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("empty index returns nothing and rejects bad queries") {
    KdIndex index(3);
    CHECK(index.query(std::vector<double>{0, 0, 0}, 5).empty());
    CHECK_THROWS_AS(index.query(std::vector<double>{0, 0}, 5), InputError);
    CHECK_THROWS_AS(index.query(std::vector<double>{0, 0, 0}, 0), InputError);
    CHECK_THROWS_AS(KdIndex(0), InputError);
}

TEST_CASE("duplicate and unknown ids are internal errors") {
    KdIndex index(2);
    index.insert(4, std::vector<double>{1, 2});
    CHECK_THROWS_AS(index.insert(4, std::vector<double>{0, 0}), InternalError);
    CHECK_THROWS_AS(index.update_key(5, std::vector<double>{0, 0}), InternalError);
    CHECK_THROWS_AS(index.insert(6, std::vector<double>{0}), InputError);
}

TEST_CASE("exact queries equal the linear scan after a rebuild") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t dim = 1 + rng() % 8;
        const std::size_t n = 1 + rng() % 400;
        KdIndex index(dim);
        std::map<std::uint64_t, oracle::Vec> shadow;
        for (std::size_t i = 0; i < n; ++i) {
            shadow[i] = oracle::random_vec(rng, dim);
            index.insert(i, shadow[i]);
        }
        index.rebuild();
        CHECK(index.check_invariants());
        CHECK(index.loose_count() == 0);
        for (int q = 0; q < 50; ++q) check_against_scan(index, shadow, oracle::random_vec(rng, dim), 1 + rng() % 60);
    }
}

TEST_CASE("ties are ordered by KeyId") {
    std::mt19937_64 rng(5);
    KdIndex index(2);
    std::map<std::uint64_t, oracle::Vec> shadow;
    for (std::uint64_t i = 0; i < 300; ++i) {
        shadow[i] = grid_point(rng, 2);
        index.insert(i, shadow[i]);
        if (i == 150) index.rebuild();
    }
    for (int q = 0; q < 100; ++q) {
        const auto query = grid_point(rng, 2);
        check_against_scan(index, shadow, query, 1 + rng() % 40);
        const auto got = index.query(query, 40);
        for (std::size_t i = 1; i < got.size(); ++i) CHECK(neighbor_less(got[i - 1], got[i]));
    }
}

TEST_CASE("interleaved insert/update/rebuild keeps queries exact and ids intact") {
    std::mt19937_64 rng(99);
    KdIndexOptions opts;
    opts.rebuild_threshold = 64;
    const std::size_t dim = 4;
    KdIndex index(dim, opts);
    std::map<std::uint64_t, oracle::Vec> shadow;
    std::uint64_t next = 0;
    for (int op = 0; op < 5000; ++op) {
        const int kind = int(rng() % 10);
        if (kind < 4 || shadow.empty()) {
            shadow[next] = rng() % 3 == 0 ? grid_point(rng, dim) : oracle::random_vec(rng, dim);
            index.insert(next, shadow[next]);
            ++next;
        } else if (kind < 8) {
            const std::uint64_t id = rng() % next;
            auto& v = shadow[id];
            // Small moves usually stay inside the leaf cell; large ones leave it.
            const double scale = rng() % 2 ? 1e-3 : 1.0;
            for (auto& x : v) x += scale * std::uniform_real_distribution<double>(-1, 1)(rng);
            index.update_key(id, v);
        } else if (kind == 8) {
            index.rebuild_if_stale();
        } else {
            check_against_scan(index, shadow, oracle::random_vec(rng, dim), 1 + rng() % 30);
        }
        if (op % 500 == 0) {
            CHECK(index.check_invariants());
            std::vector<KeyId> ids;
            for (const auto& [id, v] : shadow) ids.push_back(id);
            CHECK(index.ids() == ids);
            for (const auto& [id, v] : shadow) {
                const auto k = index.key(id);
                CHECK(std::vector<double>(k.begin(), k.end()) == v);
            }
        }
    }
    CHECK(index.size() == shadow.size());
    CHECK(index.rebuild_count() > 0);
}

TEST_CASE("a small move keeps the key in the tree") {
    KdIndex index(1);
    for (std::uint64_t i = 0; i < 64; ++i) index.insert(i, std::vector<double>{double(i)});
    index.rebuild();
    REQUIRE(index.loose_count() == 0);
    index.update_key(10, std::vector<double>{10.001});
    CHECK(index.moved_count() == 0);
    index.update_key(10, std::vector<double>{60.5});
    CHECK(index.moved_count() == 1);
    CHECK(index.dirty());
    const auto r = index.query(std::vector<double>{60.6}, 1);
    CHECK(r.front().id == 10);
    CHECK(index.check_invariants());
}

TEST_CASE("rebuild is a no-op for results and idempotent") {
    std::mt19937_64 rng(8);
    KdIndex index(3);
    std::vector<oracle::Vec> queries;
    for (std::uint64_t i = 0; i < 500; ++i) index.insert(i, oracle::random_vec(rng, 3));
    for (int i = 0; i < 100; ++i) queries.push_back(oracle::random_vec(rng, 3));
    std::vector<std::vector<Neighbor>> before;
    for (const auto& q : queries) before.push_back(index.query(q, 10));
    index.rebuild();
    std::vector<std::vector<Neighbor>> once;
    for (const auto& q : queries) once.push_back(index.query(q, 10));
    index.rebuild();
    std::vector<std::vector<Neighbor>> twice;
    for (const auto& q : queries) twice.push_back(index.query(q, 10));
    CHECK(before == once);
    CHECK(once == twice);
}

TEST_CASE("rebuild policy: loose threshold and moved fraction") {
    KdIndexOptions opts;
    opts.rebuild_threshold = 16;
    KdIndex index(2, opts);
    for (std::uint64_t i = 0; i < 15; ++i) index.insert(i, std::vector<double>{double(i), 0});
    CHECK(index.rebuild_count() == 0);
    index.insert(15, std::vector<double>{15, 0});
    CHECK(index.rebuild_count() == 1);
    CHECK(index.loose_count() == 0);
    CHECK_FALSE(index.rebuild_if_stale());
    index.update_key(0, std::vector<double>{100, 100});
    CHECK(index.moved_count() == 1);
    CHECK_FALSE(index.rebuild_if_stale());  // 1 of 16 moved: below 10%
    index.update_key(1, std::vector<double>{50, -100});
    CHECK(index.moved_count() == 2);
    CHECK(index.rebuild_if_stale());  // 2 of 16
    CHECK(index.moved_count() == 0);
    CHECK(index.check_invariants());
}

TEST_CASE("approximate results are valid neighbours with the right shape") {
    std::mt19937_64 rng(21);
    KdIndex index(8);
    std::map<std::uint64_t, oracle::Vec> shadow;
    for (std::uint64_t i = 0; i < 5000; ++i) {
        shadow[i] = oracle::random_vec(rng, 8);
        index.insert(i, shadow[i]);
    }
    index.rebuild();
    double recall = 0.0;
    for (int q = 0; q < 100; ++q) {
        const auto query = oracle::random_vec(rng, 8);
        const auto approx = index.query(query, 20, SearchMode::approximate);
        const auto exact = oracle::linear_knn(shadow, query, 20);
        REQUIRE(approx.size() == 20);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < approx.size(); ++i) {
            CHECK(approx[i].distance2 == oracle::squared_distance(query, shadow[approx[i].id]));
            if (i > 0) CHECK(neighbor_less(approx[i - 1], approx[i]));
            for (const auto& e : exact) hits += e.first == approx[i].id;
        }
        recall += double(hits) / 20.0;
    }
    CHECK(recall / 100.0 > 0.3);
}
