#include "nec/baselines.hpp"
#include "nec/error.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace nec;

namespace {

MfecMemoryConfig mfec_config(std::size_t capacity, int k) {
    MfecMemoryConfig c;
    c.capacity = capacity;
    c.k = k;
    return c;
}

void train(Agent& agent, Environment& env, std::uint64_t steps, std::uint64_t seed) {
    env.reset(seed);
    agent.begin_episode(env);
    for (std::uint64_t t = 0; t < steps; ++t) {
        if (!env.episode_active()) {
            env.reset(seed + t + 1);
            agent.begin_episode(env);
        }
        agent.step(env);
    }
}

EnvSpec chain(std::size_t n) {
    EnvSpec s;
    s.kind = EnvKind::chain;
    s.length = n;
    return s;
}

EnvSpec grid(std::size_t w, std::size_t h) {
    EnvSpec s;
    s.kind = EnvKind::gridworld;
    s.width = w;
    s.height = h;
    return s;
}

}  // namespace

TEST_CASE("mfec memory: exact match returns the stored value") {
    MfecMemory mem(2, mfec_config(10, 3));
    CHECK_THROWS_AS(mem.lookup(std::vector<double>{0, 0}), EmptyMemoryError);
    mem.write(std::vector<double>{0, 0}, 4.0);
    mem.write(std::vector<double>{1, 1}, 10.0);
    CHECK(mem.lookup(std::vector<double>{0, 0}) == 4.0);
    CHECK(mem.peek(std::vector<double>{5, 5}) == 7.0);
}

TEST_CASE("mfec memory: k >= size without exact match gives the global mean") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng() % 20;
        MfecMemory mem(3, mfec_config(50, int(n + rng() % 3)));
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = oracle::random_vec(rng, 1, -5, 5)[0];
            mem.write(oracle::random_vec(rng, 3), v);
            sum += v;
        }
        CHECK(mem.lookup(std::vector<double>{9, 9, 9}) == doctest::Approx(sum / double(n)).epsilon(1e-12));
    }
}

TEST_CASE("mfec memory: mean of the k nearest") {
    MfecMemory mem(1, mfec_config(10, 2));
    mem.write(std::vector<double>{0}, 1.0);
    mem.write(std::vector<double>{1}, 3.0);
    mem.write(std::vector<double>{10}, 100.0);
    CHECK(mem.lookup(std::vector<double>{0.4}) == 2.0);
}

TEST_CASE("mfec writes never decrease a stored value") {
    std::mt19937_64 rng(6);
    MfecMemory mem(1, mfec_config(8, 1));
    std::vector<double> keys{0, 1, 2, 3};
    for (int op = 0; op < 500; ++op) {
        const double key = keys[rng() % keys.size()];
        const double before = mem.empty() ? -1e300 : mem.peek(std::vector<double>{key});
        const bool known = !mem.empty() && mem.store().nearest(std::vector<double>{key}, 1, SearchMode::exact)
                                                   .front()
                                                   .distance2 == 0.0;
        mem.write(std::vector<double>{key}, oracle::random_vec(rng, 1, -5, 5)[0]);
        if (known) CHECK(mem.peek(std::vector<double>{key}) >= before);
    }
    CHECK(mem.size() == keys.size());
}

TEST_CASE("mfec overwrite update replaces the value") {
    auto cfg = mfec_config(4, 1);
    cfg.update = MfecUpdate::overwrite;
    MfecMemory mem(1, cfg);
    mem.write(std::vector<double>{0}, 5.0);
    mem.write(std::vector<double>{0}, 2.0);
    CHECK(mem.peek(std::vector<double>{0}) == 2.0);
    CHECK(parse_mfec_update("max") == MfecUpdate::max);
    CHECK_THROWS_AS(parse_mfec_update("mean"), ConfigError);
}

TEST_CASE("mfec memory evicts the least recently used entry at capacity") {
    MfecMemory mem(1, mfec_config(3, 1));
    for (int i = 0; i < 3; ++i) mem.write(std::vector<double>{double(i)}, double(i));
    mem.lookup(std::vector<double>{0.1});  // stamps key 0
    const auto w = mem.write(std::vector<double>{7}, 7.0);
    CHECK(w.kind == WriteKind::evicted_and_appended);
    CHECK(w.id == 1);
    CHECK(mem.size() == 3);
}

TEST_CASE("mfec memory snapshot round-trip") {
    std::mt19937_64 rng(1);
    MfecMemory mem(4, mfec_config(30, 5));
    for (int i = 0; i < 20; ++i) mem.write(oracle::random_vec(rng, 4), double(i));
    std::stringstream ss;
    mem.save(ss);
    CHECK(ss.str().substr(0, 8) == "NECMFEC1");
    const auto copy = MfecMemory::load(ss);
    const auto q = oracle::random_vec(rng, 4);
    CHECK(copy.peek(q) == mem.peek(q));
    CHECK(copy.config().k == 5);
}

TEST_CASE("mfec agent writes discounted Monte Carlo returns at episode end") {
    MfecConfig cfg;
    cfg.key_dim = 4;
    cfg.gamma = 0.5;
    cfg.epsilon = {0.0, 0.0, 0};
    Environment env(chain(3));
    MfecAgent agent(cfg, env.obs_dim(), env.num_actions(), 1);
    env.reset(0);
    agent.begin_episode(env);
    while (env.episode_active()) agent.step(env);
    std::size_t stored = 0;
    for (std::size_t a = 0; a < 2; ++a) stored += agent.memory(a).size();
    CHECK(stored >= 1);
    // The last move reached the goal with reward 1: its key holds return 1.
    const auto last = agent.projection().embed(env.render_state(1));
    CHECK(agent.memory(1).peek(last) == 1.0);
    const auto first = agent.projection().embed(env.render_state(0));
    CHECK(agent.memory(1).peek(first) == 0.5);
}

TEST_CASE("mfec agent is deterministic and greedy queries do not mutate it") {
    MfecConfig cfg;
    cfg.key_dim = 4;
    auto run = [&] {
        Environment env(grid(3, 3));
        MfecAgent agent(cfg, env.obs_dim(), env.num_actions(), 5);
        train(agent, env, 300, 1);
        std::ostringstream before;
        agent.save(before);
        std::mt19937_64 tie(0);
        env.reset(9);
        agent.greedy_action(env, tie);
        std::ostringstream after;
        agent.save(after);
        CHECK(before.str() == after.str());
        return after.str();
    };
    CHECK(run() == run());
}

TEST_CASE("q-table update rule") {
    QTable q(2, 2);
    q.update(0, 1, 1.0, 1, true, 0.9, 1.0);
    CHECK(q.at(0, 1) == 1.0);
    QTable z(2, 2);
    z.update(0, 0, 0.0, 1, false, 0.9, 0.5);
    CHECK(z.at(0, 0) == 0.0);
    QTable b(2, 2);
    b.at(1, 0) = 2.0;
    b.update(0, 0, 1.0, 1, false, 0.5, 0.5);
    CHECK(b.at(0, 0) == 0.5 * (1.0 + 0.5 * 2.0));
    CHECK(b.max_row(1) == 2.0);
}

TEST_CASE("clipped tabular agent learns from clipped rewards") {
    TabularConfig cfg;
    cfg.clip_rewards = true;
    cfg.learning_rate = 1.0;
    cfg.epsilon = {0.0, 0.0, 0};
    EnvSpec spec;
    spec.kind = EnvKind::noisy_gridworld;
    spec.width = 3;
    spec.height = 2;
    Environment env(spec);
    TabularAgent agent(cfg, env.num_states(), env.num_actions(), 0);
    env.reset(0);
    agent.begin_episode(env);
    const std::size_t s0 = env.state();
    // Force the bonus: step down from (0,0) onto (1,0).
    agent.mutable_table().at(s0, 2) = 1e-9;
    agent.step(env);
    CHECK(agent.table().at(s0, 2) == 1.0);
}

TEST_CASE("tabular q-learning converges to Q* under the documented schedule") {
    for (const auto& spec : {chain(5), grid(3, 3)}) {
        const double gamma = 0.9;
        const auto q_star = optimal_q_oracle(spec, gamma);
        const auto reach = reachable_states(build_mdp(spec));
        std::vector<double> errors;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            TabularConfig cfg;
            cfg.gamma = gamma;
            cfg.learning_rate = 0.1;
            cfg.epsilon = {1.0, 0.05, 50000};
            Environment env(spec);
            TabularAgent agent(cfg, env.num_states(), env.num_actions(), seed);
            train(agent, env, 100000, seed * 1000);
            double worst = 0.0;
            for (auto s : reach)
                for (std::size_t a = 0; a < env.num_actions(); ++a)
                    worst = std::max(worst, std::abs(agent.table().at(s, a) - q_star[s * env.num_actions() + a]));
            errors.push_back(worst);
        }
        std::sort(errors.begin(), errors.end());
        CHECK(errors[2] < 0.01);
    }
}
