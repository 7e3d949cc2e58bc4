#pragma once

// Small, exactly solvable environments. Every environment is a finite MDP whose
// transition table is built once and exported; stepping samples from that table,
// so the value-iteration oracle never re-implements dynamics.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace nec {

using Observation = std::vector<double>;

struct Outcome {
    double probability = 1.0;
    std::size_t next = 0;
    double reward = 0.0;
    bool terminal = false;
};

struct TabularMdp {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::size_t start = 0;
    std::vector<std::vector<Outcome>> table;  // index state * num_actions + action
    std::vector<bool> terminal;               // states entered only by terminal outcomes
    std::vector<std::string> state_labels;

    const std::vector<Outcome>& outcomes(std::size_t s, std::size_t a) const { return table[s * num_actions + a]; }
    std::vector<Outcome>& outcomes(std::size_t s, std::size_t a) { return table[s * num_actions + a]; }
    /// Throws ConfigError unless every row has probabilities summing to 1 and valid indices.
    void validate() const;
};

enum class EnvKind { chain, gridworld, noisy_gridworld, cliff };
enum class ObsMode { onehot, pixel };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);
std::string_view to_string(ObsMode mode);
ObsMode parse_obs_mode(std::string_view name);

// Layouts (row 0 at the top, actions 0 up, 1 right, 2 down, 3 left):
//   chain(n):       states 0..n-1 left to right, start 0; actions 0 left, 1 right.
//                   Moving right from n-2 enters n-1: reward 1, terminal.
//                   Moving left from 0 stays put. Every other move rewards 0.
//   gridworld WxH:  start (0,0), goal (H-1,W-1): reward 1 and terminal.
//                   Border walls absorb moves (agent stays, reward 0).
//   cliff WxH:      start (H-1,0), goal (H-1,W-1), cliff cells (H-1,1..W-2).
//                   Every step rewards -1; entering the cliff rewards -100 and
//                   terminates; entering the goal terminates.
//   noisy_gridworld WxH: start (0,0); pellets on (0,1)..(0,W-2) each +1 once;
//                   exit (0,W-1) +1 terminal; bonus (H-1,0) +50 terminal.
//                   State = (cell, remaining-pellet mask). Pixel observations
//                   carry `noise_pixels` extra values resampled from {0,1} on
//                   every render; they never influence dynamics or reward.
struct EnvSpec {
    EnvKind kind = EnvKind::chain;
    std::size_t length = 5;  // chain
    std::size_t width = 4;
    std::size_t height = 4;
    ObsMode obs = ObsMode::onehot;
    std::size_t max_steps = 200;
    std::size_t noise_pixels = 32;
    double pellet_reward = 1.0;
    double exit_reward = 1.0;
    double bonus_reward = 50.0;
    std::string label;  // defaults to e.g. "gridworld_6x6"

    void validate() const;
    std::string display_label() const;
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool terminal = false;   // MDP terminal state reached
    bool truncated = false;  // episode cap hit in a non-terminal state

    bool done() const { return terminal || truncated; }
};

class Environment {
public:
    explicit Environment(EnvSpec spec);

    const EnvSpec& spec() const { return spec_; }
    const TabularMdp& mdp() const { return mdp_; }
    std::size_t num_actions() const { return mdp_.num_actions; }
    std::size_t num_states() const { return mdp_.num_states; }
    std::size_t obs_dim() const { return obs_dim_; }
    std::size_t obs_rows() const { return obs_rows_; }
    std::size_t obs_cols() const { return obs_cols_; }

    Observation reset(std::uint64_t seed);
    /// Throws UsageError once the episode is over or before the first reset.
    StepResult step(std::size_t action);

    std::size_t state() const { return state_; }
    const Observation& observation() const { return observation_; }
    bool episode_active() const { return active_; }
    std::size_t steps_taken() const { return steps_; }

    /// Noise-free rendering of a state (pixel mode without the noise band drawn).
    Observation render_state(std::size_t state) const;

    /// Human-readable dump of the transition table.
    std::string dump_transitions() const;

private:
    void render(Observation& out);

    EnvSpec spec_;
    TabularMdp mdp_;
    std::vector<Observation> base_obs_;
    std::size_t obs_dim_ = 0;
    std::size_t obs_rows_ = 1;
    std::size_t obs_cols_ = 0;
    std::mt19937_64 rng_;
    std::size_t state_ = 0;
    std::size_t steps_ = 0;
    bool active_ = false;
    Observation observation_;
};

TabularMdp build_mdp(const EnvSpec& spec);

/// Q* by value iteration until the Bellman residual is below `tolerance`
/// (scaled by (1 - gamma) so the Q error is itself below `tolerance`).
/// Result is num_states x num_actions, row-major.
std::vector<double> value_iteration(const TabularMdp& mdp, double gamma, double tolerance = 1e-10);
std::vector<double> optimal_q_oracle(const EnvSpec& spec, double gamma);

/// States reachable from the start under any policy.
std::vector<std::size_t> reachable_states(const TabularMdp& mdp);

}  // namespace nec
