#pragma once

// Baselines sharing the Agent interface: model-free episodic control (k-NN mean
// of stored Monte Carlo returns over a fixed random projection) and one-step
// tabular Q-learning.

#include "nec/agent.hpp"
#include "nec/embed.hpp"
#include "nec/memory_store.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace nec {

enum class MfecUpdate { max, overwrite };
std::string_view to_string(MfecUpdate update);
MfecUpdate parse_mfec_update(std::string_view name);

struct MfecMemoryConfig {
    std::size_t capacity = 50000;
    int k = 11;
    double exact_match_eps = 1e-10;
    MfecUpdate update = MfecUpdate::max;
    SearchMode search = SearchMode::exact;
    std::size_t rebuild_threshold = 1024;

    void validate() const;
};

/// Per-action store of (key, Monte Carlo return).
class MfecMemory {
public:
    MfecMemory(std::size_t key_dim, MfecMemoryConfig config);

    const MfecMemoryConfig& config() const { return config_; }
    std::size_t size() const { return store_.size(); }
    bool empty() const { return store_.empty(); }
    std::size_t key_dim() const { return store_.key_dim(); }

    /// Stored value on an exact match, else the unweighted mean of the (up to)
    /// k nearest values. Stamps the entries used. Throws EmptyMemoryError.
    double lookup(std::span<const double> h);
    double peek(std::span<const double> h) const;

    /// Exact match: max(stored, ret) (or ret under overwrite); else append,
    /// evicting the least recently used entry at capacity.
    WriteOutcome write(std::span<const double> h, double ret);

    const MemoryStore& store() const { return store_; }
    MemoryStats stats() const { return store_.stats(); }

    void save(std::ostream& os) const;
    static MfecMemory load(std::istream& is);

private:
    std::vector<KeyId> neighbours(std::span<const double> h, bool& exact) const;
    double estimate(std::span<const KeyId> ids) const;

    MfecMemoryConfig config_;
    MemoryStore store_;
};

struct MfecConfig {
    MfecMemoryConfig memory;
    std::size_t key_dim = 16;
    double gamma = 1.0;
    double q_default = 0.0;
    EpsilonSchedule epsilon;

    void validate() const;
};

class MfecAgent final : public Agent {
public:
    MfecAgent(MfecConfig config, std::size_t obs_dim, std::size_t num_actions, std::uint64_t seed);

    std::string_view kind() const override { return "mfec"; }
    void begin_episode(const Environment& env) override;
    StepResult step(Environment& env) override;
    std::size_t greedy_action(const Environment& env, std::mt19937_64& tie_rng) const override;
    std::uint64_t steps() const override { return steps_; }
    void save(std::ostream& os) const override;

    std::vector<double> q_values(std::span<const double> obs);
    std::vector<double> q_values_peek(std::span<const double> obs) const;
    /// Writes discounted returns for the episode so far and clears it.
    void end_episode();

    const RandomProjection& projection() const { return projection_; }
    const MfecMemory& memory(std::size_t action) const { return memories_.at(action); }
    std::size_t num_actions() const { return memories_.size(); }

private:
    struct Visit {
        std::vector<double> key;
        std::size_t action = 0;
        double reward = 0.0;
    };

    MfecConfig config_;
    RandomProjection projection_;
    std::vector<MfecMemory> memories_;
    std::mt19937_64 rng_;
    std::vector<Visit> episode_;
    Observation current_obs_;
    std::uint64_t steps_ = 0;
};

/// Dense Q table, row-major states x actions.
class QTable {
public:
    QTable(std::size_t num_states, std::size_t num_actions, double init = 0.0);

    std::size_t num_states() const { return num_states_; }
    std::size_t num_actions() const { return num_actions_; }
    double& at(std::size_t s, std::size_t a);
    double at(std::size_t s, std::size_t a) const;
    std::span<const double> row(std::size_t s) const;
    double max_row(std::size_t s) const;
    std::span<const double> data() const { return q_; }

    /// Q(s,a) += lr (r + gamma max_a' Q(s',a') (1 - done) - Q(s,a)).
    void update(std::size_t s, std::size_t a, double r, std::size_t s_next, bool done, double gamma, double lr);

private:
    std::size_t num_states_;
    std::size_t num_actions_;
    std::vector<double> q_;
};

struct TabularConfig {
    double learning_rate = 0.1;
    double gamma = 0.99;
    double init = 0.0;
    bool clip_rewards = false;  // clip each reward to [-1, 1] before learning
    EpsilonSchedule epsilon;

    void validate() const;
};

/// Reads the env's underlying state index; observations are ignored.
class TabularAgent final : public Agent {
public:
    TabularAgent(TabularConfig config, std::size_t num_states, std::size_t num_actions, std::uint64_t seed);

    std::string_view kind() const override { return "tabular"; }
    void begin_episode(const Environment& env) override;
    StepResult step(Environment& env) override;
    std::size_t greedy_action(const Environment& env, std::mt19937_64& tie_rng) const override;
    std::uint64_t steps() const override { return steps_; }
    void save(std::ostream& os) const override;

    const QTable& table() const { return q_; }
    QTable& mutable_table() { return q_; }

private:
    TabularConfig config_;
    QTable q_;
    std::mt19937_64 rng_;
    std::uint64_t steps_ = 0;
};

}  // namespace nec
