#include "nec/dnd.hpp"
#include "nec/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace nec;

namespace {

DndConfig config(std::size_t capacity, int p, double alpha = 0.1) {
    DndConfig c;
    c.capacity = capacity;
    c.p = p;
    c.alpha = alpha;
    return c;
}

struct Filled {
    DndMemory dnd;
    std::vector<oracle::Vec> keys;
    oracle::Vec values;
};

Filled random_memory(std::mt19937_64& rng, std::size_t dim, std::size_t n, int p) {
    Filled f{DndMemory(dim, config(std::max<std::size_t>(n, std::size_t(p)), p)), {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        auto k = oracle::random_vec(rng, dim);
        const double v = std::uniform_real_distribution<double>(-5, 5)(rng);
        REQUIRE(f.dnd.write(k, v).kind == WriteKind::appended);
        f.keys.push_back(k);
        f.values.push_back(v);
    }
    return f;
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(DndConfig{}.validate());
    auto c = config(10, 20);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(10, 0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(10, 5, 0.0);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = config(10, 5, 1.5);
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("kernel is inverse squared distance plus delta") {
    const std::vector<double> a{0, 0}, b{3, 4};
    CHECK(kernel(a, b, 1e-3) == 1.0 / (25.0 + 1e-3));
    CHECK(kernel(a, a, 0.5) == 2.0);
    CHECK_THROWS_AS(kernel(a, std::vector<double>{1}, 1e-3), InputError);
}

TEST_CASE("lookup on empty memory and bad shapes") {
    DndMemory dnd(2, config(4, 2));
    CHECK_THROWS_AS(dnd.lookup(std::vector<double>{0, 0}), EmptyMemoryError);
    dnd.write(std::vector<double>{0, 0}, 1);
    CHECK_THROWS_AS(dnd.lookup(std::vector<double>{0}), InputError);
    CHECK_THROWS_AS(dnd.write(std::vector<double>{0}, 1), InputError);
    CHECK_THROWS_AS(dnd.write(std::vector<double>{0, 1}, std::nan("")), InputError);
}

TEST_CASE("single entry lookup returns its value") {
    DndMemory dnd(3, config(4, 2));
    dnd.write(std::vector<double>{1, 2, 3}, 4.5);
    const auto t = dnd.lookup(std::vector<double>{-1, 0, 7});
    REQUIRE(t.ids.size() == 1);
    CHECK(t.weights[0] == 1.0);
    CHECK(t.output == 4.5);
}

TEST_CASE("dense equivalence and weight simplex") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t dim = 2 + rng() % 15;
        const std::size_t n = 1 + rng() % 120;
        auto f = random_memory(rng, dim, n, int(n + rng() % 5));
        const auto q = oracle::random_vec(rng, dim);
        const auto t = f.dnd.lookup(q);
        CHECK(t.ids.size() == n);
        CHECK(std::abs(t.output - oracle::dense_lookup(f.keys, f.values, q, 1e-3)) <= 1e-12);
        double sum = 0.0;
        for (double w : t.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        double o = 0.0;
        for (std::size_t i = 0; i < t.ids.size(); ++i) o += t.weights[i] * f.dnd.value(t.ids[i]);
        CHECK(o == t.output);
    }
}

TEST_CASE("peek equals lookup without stamping") {
    std::mt19937_64 rng(4);
    auto f = random_memory(rng, 4, 30, 5);
    const auto q = oracle::random_vec(rng, 4);
    const auto before = f.dnd.store().clock();
    const auto a = f.dnd.peek(q);
    CHECK(f.dnd.store().clock() == before);
    const auto b = f.dnd.lookup(q);
    CHECK(a.ids == b.ids);
    CHECK(a.output == b.output);
    for (auto id : b.ids) CHECK(f.dnd.last_neighbour_time(id) == before);
}

TEST_CASE("repeated writes of one target contract the error by (1 - alpha)") {
    for (double alpha : {0.1, 0.5, 1.0}) {
        DndMemory dnd(2, config(8, 1, alpha));
        const std::vector<double> key{0.25, -0.5};
        dnd.write(key, 3.0);
        double expected = 3.0;
        for (int n = 1; n <= 20; ++n) {
            const auto w = dnd.write(key, 0.0);
            CHECK(w.kind == WriteKind::updated);
            expected *= 1.0 - alpha;
            CHECK(dnd.value(w.id) == expected);
        }
        CHECK(dnd.size() == 1);
    }
}

TEST_CASE("fast update moves the value toward the target") {
    DndMemory dnd(1, config(4, 1, 0.25));
    dnd.write(std::vector<double>{1}, 8.0);
    dnd.write(std::vector<double>{1}, 0.0);
    CHECK(dnd.value(0) == 6.0);
    // Slightly off key still counts as the same key.
    dnd.write(std::vector<double>{1 + 1e-6}, 0.0);
    CHECK(dnd.value(0) == 4.5);
    CHECK(dnd.write(std::vector<double>{1.1}, 0.0).kind == WriteKind::appended);
}

TEST_CASE("capacity is never exceeded and eviction takes the least recent neighbour") {
    std::mt19937_64 rng(12);
    DndMemory dnd(2, config(16, 3));
    oracle::ShadowLru shadow;
    for (int op = 0; op < 5000; ++op) {
        if (rng() % 2 == 0 && !dnd.empty()) {
            const auto t = dnd.lookup(oracle::random_vec(rng, 2));
            shadow.touch(std::vector<std::uint64_t>(t.ids.begin(), t.ids.end()));
        } else {
            const bool full = dnd.size() == dnd.config().capacity;
            const std::uint64_t expected = full ? shadow.victim() : 0;
            const auto w = dnd.write(oracle::random_vec(rng, 2), 1.0);
            if (w.kind == WriteKind::evicted_and_appended) {
                CHECK(full);
                CHECK(w.id == expected);
                shadow.overwrite(w.id);
            } else if (w.kind == WriteKind::appended) {
                shadow.append(w.id);
            } else {
                shadow.touch({w.id});
            }
        }
        REQUIRE(dnd.size() <= 16);
    }
}

TEST_CASE("weights decay polynomially, not exponentially") {
    DndMemory dnd(1, config(4, 2));
    const double d2 = 100.0;  // squared distance, far above delta
    dnd.write(std::vector<double>{std::sqrt(d2)}, 1.0);
    dnd.write(std::vector<double>{-std::sqrt(2.0 * d2)}, 0.0);
    const auto t = dnd.lookup(std::vector<double>{0.0});
    REQUIRE(t.ids.size() == 2);
    CHECK(t.weights[0] / t.weights[1] == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("lookup backward matches finite differences of the dense oracle") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 2 + rng() % 6;
        const std::size_t n = 1 + rng() % 20;
        const int p = int(1 + rng() % (n + 2));
        auto f = random_memory(rng, dim, n, p);
        auto q = oracle::random_vec(rng, dim);
        const double g_out = std::uniform_real_distribution<double>(-2, 2)(rng);
        const auto t = f.dnd.lookup(q);
        const auto g = f.dnd.lookup_backward(t, g_out);
        // Loss g_out * o over the fixed neighbour set of the trace.
        std::vector<oracle::Vec> nk;
        oracle::Vec nv;
        for (auto id : t.ids) {
            nk.push_back(f.keys[id]);
            nv.push_back(f.values[id]);
        }
        auto loss = [&] { return g_out * oracle::dense_lookup(nk, nv, q, 1e-3); };
        for (std::size_t d = 0; d < dim; ++d)
            CHECK(oracle::gradients_agree(g.d_query[d], oracle::central_difference(loss, q[d])));
        for (std::size_t i = 0; i < t.ids.size(); ++i) {
            CHECK(oracle::gradients_agree(g.d_values[i], oracle::central_difference(loss, nv[i])));
            for (std::size_t d = 0; d < dim; ++d)
                CHECK(oracle::gradients_agree(g.d_keys[i * dim + d], oracle::central_difference(loss, nk[i][d])));
        }
    }
}

TEST_CASE("backward through a stale trace is an internal error") {
    DndMemory dnd(1, config(4, 2));
    dnd.write(std::vector<double>{0}, 1);
    dnd.write(std::vector<double>{1}, 2);
    const auto t = dnd.lookup(std::vector<double>{0.5});
    const KeyId ids[] = {0};
    const double dk[] = {0.5}, dv[] = {0.0};
    dnd.apply_gradients(ids, dk, dv, 0.1);
    CHECK_THROWS_AS(dnd.lookup_backward(t, 1.0), InternalError);
}

TEST_CASE("apply_gradients is a plain SGD step") {
    DndMemory dnd(2, config(4, 2));
    dnd.write(std::vector<double>{0, 0}, 1.0);
    dnd.write(std::vector<double>{3, 3}, 2.0);
    const KeyId ids[] = {0, 1};
    const double zero_k[] = {0, 0, 0, 0}, zero_v[] = {0, 0};
    const auto epoch = dnd.store().key_epoch();
    dnd.apply_gradients(ids, zero_k, zero_v, 0.5);
    CHECK(dnd.value(0) == 1.0);
    CHECK(dnd.store().key_epoch() == epoch);
    CHECK_FALSE(dnd.store().index().dirty());

    const double dv[] = {0.4, 0.0};
    dnd.apply_gradients(ids, zero_k, dv, 0.5);
    CHECK(dnd.value(0) == 1.0 - 0.5 * 0.4);
    CHECK(dnd.value(1) == 2.0);

    const double dk[] = {2.0, 0.0, 0.0, 0.0};
    dnd.apply_gradients(ids, dk, zero_v, 0.5);
    CHECK(dnd.key(0)[0] == -1.0);
    const KeyId unknown[] = {7};
    CHECK_THROWS_AS(dnd.apply_gradients(unknown, std::vector<double>{0, 0}, std::vector<double>{0}, 0.1),
                    InternalError);
    CHECK_THROWS_AS(dnd.apply_gradients(ids, zero_v, zero_v, 0.1), InputError);
}

TEST_CASE("lookups after key moves and a rebuild match the dense oracle") {
    std::mt19937_64 rng(3);
    auto f = random_memory(rng, 3, 40, 50);
    std::vector<KeyId> ids;
    std::vector<double> dk, dv;
    for (KeyId id = 0; id < 40; id += 2) {
        ids.push_back(id);
        const auto step = oracle::random_vec(rng, 3);
        for (std::size_t d = 0; d < 3; ++d) {
            dk.push_back(step[d]);
            f.keys[id][d] -= 0.1 * step[d];
        }
        dv.push_back(0.0);
    }
    f.dnd.apply_gradients(ids, dk, dv, 0.1);
    for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < 20; ++i) {
            const auto q = oracle::random_vec(rng, 3);
            CHECK(std::abs(f.dnd.peek(q).output - oracle::dense_lookup(f.keys, f.values, q, 1e-3)) <= 1e-12);
        }
        f.dnd.maintain_index();
    }
}

TEST_CASE("snapshot round-trip preserves lookups and configuration") {
    std::mt19937_64 rng(9);
    auto f = random_memory(rng, 5, 60, 7);
    const auto q = oracle::random_vec(rng, 5);
    f.dnd.lookup(q);
    std::stringstream ss;
    f.dnd.save(ss);
    CHECK(ss.str().substr(0, 8) == "NECDND01");
    auto copy = DndMemory::load(ss);
    CHECK(copy.size() == 60);
    CHECK(copy.config().p == 7);
    CHECK(copy.config().capacity == f.dnd.config().capacity);
    const auto q2 = oracle::random_vec(rng, 5);
    CHECK(copy.peek(q2).output == f.dnd.peek(q2).output);
    CHECK(copy.store().lru_victim() == f.dnd.store().lru_victim());
    std::stringstream bad("NOTADND!");
    CHECK_THROWS_AS(DndMemory::load(bad), IoError);
}
