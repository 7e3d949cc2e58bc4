#pragma once

#include "nec/dnd.hpp"
#include "nec/embed.hpp"
#include "nec/envs.hpp"

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace nec {

/// Linear anneal from `start` to `end` over the first `anneal_steps`, then flat.
struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.005;
    std::uint64_t anneal_steps = 1000;

    double at(std::uint64_t step) const;
    void validate() const;
};

/// epsilon-greedy: uniform action with probability epsilon, otherwise uniform
/// over the argmax set. Throws InputError on empty q or epsilon outside [0, 1].
std::size_t select_action(std::span<const double> q, double epsilon, std::mt19937_64& rng);

/// Uniform over the argmax set.
std::size_t greedy_choice(std::span<const double> q, std::mt19937_64& rng);

/// sum_j gamma^j r_j + gamma^len * bootstrap, with the bootstrap dropped when
/// `terminal` is set.
double n_step_target(std::span<const double> rewards, double bootstrap, double gamma, bool terminal);

/// Common interface the harness drives. step() acts once in an env whose
/// episode is active and performs whatever learning the agent does.
class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string_view kind() const = 0;
    virtual void begin_episode(const Environment& env) = 0;
    virtual StepResult step(Environment& env) = 0;
    /// Greedy action for the env's current observation; never mutates the agent.
    virtual std::size_t greedy_action(const Environment& env, std::mt19937_64& tie_rng) const = 0;
    virtual std::uint64_t steps() const = 0;
    virtual std::uint64_t skipped_records() const { return 0; }
    virtual std::uint64_t rejected_updates() const { return 0; }
    /// Complete learner state (used for checkpoints and purity checks).
    virtual void save(std::ostream& os) const = 0;
};

struct TransitionRecord {
    Observation observation;
    std::size_t action = 0;
    double target = 0.0;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(TransitionRecord record);
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    std::size_t capacity() const { return capacity_; }
    /// Insertion order, oldest first.
    const TransitionRecord& at(std::size_t i) const;

    /// Uniform with replacement. Throws EmptyMemoryError on an empty buffer.
    std::vector<TransitionRecord> sample(std::size_t batch_size, std::mt19937_64& rng) const;

    void save(std::ostream& os) const;
    static ReplayBuffer load(std::istream& is);

private:
    std::size_t capacity_;
    std::size_t next_ = 0;  // slot overwritten next once full
    std::vector<TransitionRecord> records_;
};

enum class EmbedKind { mlp, identity, projection };
std::string_view to_string(EmbedKind kind);
EmbedKind parse_embed_kind(std::string_view name);

struct EmbedConfig {
    EmbedKind kind = EmbedKind::mlp;
    std::vector<std::size_t> hidden{32};  // relu hidden widths (mlp only)
    std::size_t key_dim = 16;             // ignored by identity
    bool trainable = true;
};

struct AgentConfig {
    double gamma = 0.99;
    std::size_t n_step = 8;
    EpsilonSchedule epsilon;
    double slow_lr = 1e-4;                 // RMSProp rate for the embedding
    std::optional<double> memory_lr;       // SGD rate for DND entries; defaults to slow_lr
    double rms_rho = 0.9;
    double rms_epsilon = 1e-8;
    std::size_t replay_capacity = 10000;
    std::size_t train_every = 16;
    std::size_t batch_size = 32;
    bool batch_writes = true;
    double q_default = 0.0;                // estimate for an action whose memory is empty
    DndConfig dnd;
    EmbedConfig embed;

    double memory_learning_rate() const { return memory_lr.value_or(slow_lr); }
    void validate() const;
};

/// Neural Episodic Control: shared embedding, one DND per action, N-step
/// targets written at maturity, and replay training of embedding and memories.
class NecAgent final : public Agent {
public:
    NecAgent(AgentConfig config, std::size_t obs_dim, std::size_t num_actions, std::uint64_t seed);

    std::string_view kind() const override { return "nec"; }
    void begin_episode(const Environment& env) override;
    StepResult step(Environment& env) override;
    std::size_t greedy_action(const Environment& env, std::mt19937_64& tie_rng) const override;
    std::uint64_t steps() const override { return steps_; }
    std::uint64_t skipped_records() const override { return skipped_; }
    std::uint64_t rejected_updates() const override { return rejected_; }

    std::vector<double> key_of(std::span<const double> obs) const { return embed(params_, obs); }
    /// Per-action lookup outputs (q_default for empty memories); stamps neighbours.
    std::vector<double> q_values(std::span<const double> obs);
    std::vector<double> q_values_peek(std::span<const double> obs) const;

    /// Terminates the pending window: remaining steps get truncated Monte Carlo
    /// targets, plus gamma^k * bootstrap when one is given (episode cap hit).
    /// Commits batched writes.
    void flush_episode(std::optional<double> bootstrap = std::nullopt);

    struct MemoryGradient {
        std::vector<double> d_key;
        double d_value = 0.0;
    };
    struct BatchGradients {
        double loss = 0.0;
        std::size_t used = 0;
        std::size_t skipped = 0;
        EmbeddingParams d_params;
        std::vector<std::map<KeyId, MemoryGradient>> memory;  // per action
    };

    /// Mean (o - R)^2 over records whose action memory is non-empty, and its
    /// gradients w.r.t. the embedding and every neighbour key and value.
    BatchGradients batch_gradients(std::span<const TransitionRecord> batch);
    /// Same loss without side effects.
    double batch_loss(std::span<const TransitionRecord> batch) const;
    /// One training step; returns the pre-update loss.
    double train_minibatch(std::span<const TransitionRecord> batch);

    const AgentConfig& config() const { return config_; }
    std::size_t num_actions() const { return memories_.size(); }
    const EmbeddingParams& params() const { return params_; }
    EmbeddingParams& mutable_params() { return params_; }
    const OptState& opt_state() const { return opt_; }
    const DndMemory& memory(std::size_t action) const { return memories_.at(action); }
    DndMemory& mutable_memory(std::size_t action) { return memories_.at(action); }
    const ReplayBuffer& replay() const { return replay_; }
    std::size_t window_size() const { return window_.size(); }
    std::size_t episode_writes() const { return episode_writes_; }
    std::uint64_t total_writes() const { return total_writes_; }
    double current_epsilon() const { return config_.epsilon.at(steps_); }
    std::mt19937_64& rng() { return rng_; }

    // Checkpoint container: magic "NECCKPT1", u64 section count, then sections of
    // (8-byte tag, u64 length, payload). Tags: EMBED___ (text params), OPTSTATE
    // (text params of the RMSProp accumulator), DND<nnnnn> (DND snapshot per
    // action), REPLAY__, RNG_____ (text engine state), COUNTERS, WINDOW__.
    void save(std::ostream& os) const override;
    /// Restores into an agent built with the same config and dimensions.
    void load(std::istream& is);

private:
    struct PendingStep {
        Observation observation;
        std::vector<double> key;
        std::size_t action = 0;
        double reward = 0.0;
    };
    struct PendingWrite {
        std::size_t action = 0;
        std::vector<double> key;
        double target = 0.0;
    };

    void mature_front(double bootstrap, bool terminal);
    void commit(PendingWrite write);
    void commit_batched_writes();
    double max_q(std::span<const double> obs);

    AgentConfig config_;
    std::size_t obs_dim_;
    EmbeddingParams params_;
    OptState opt_;
    std::vector<DndMemory> memories_;
    ReplayBuffer replay_;
    std::mt19937_64 rng_;
    std::deque<PendingStep> window_;
    std::vector<PendingWrite> pending_writes_;
    Observation current_obs_;
    std::uint64_t steps_ = 0;
    std::uint64_t skipped_ = 0;
    std::uint64_t rejected_ = 0;
    std::uint64_t total_writes_ = 0;
    std::size_t episode_writes_ = 0;
};

/// DND snapshots stored in a NecAgent checkpoint (for offline inspection).
std::vector<DndMemory> read_checkpoint_memories(std::istream& is);

}  // namespace nec
